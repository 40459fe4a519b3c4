"""Domain model: task nodes, dependency edges, merged multi-user DAGs, platforms, plans.

Unit conventions used throughout the package:

* data sizes are stored in **bytes** (1 KB = 1000 bytes),
* link rates are **bits/s** (the factor 8 is applied when computing times),
* clock speeds are **cycles/s**, node work is total **cycles**,
* all times are **seconds**.

Node ids are topological: every dependency edge goes from a lower id to a
higher id. Id order is the single source of ordering truth for all
"index order" schedulers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

START_KIND = "Start"
END_KIND = "End"
EXEC_KIND = "Exec"

#: Offloading-location encoding: 0 selects the node's own user device,
#: m in 1..M selects edge server m. This is also the action encoding of
#: the environment's location head (size M + 1).
OWN = 0


class CycleDetected(ValueError):
    """The dependency edges contain a cycle."""


class DisconnectedNode(ValueError):
    """An executable node is not on any Start -> End path."""


class InvalidDag(ValueError):
    """Structural violation of the merged-DAG invariants."""


@dataclass(frozen=True)
class Node:
    id: int
    owner: int  # user index, -1 for the shared Start node
    kind: str  # Start | End | Exec
    cycles: float  # CPU cycles required
    upload_bytes: float  # program data size uploaded when offloaded


@dataclass(frozen=True)
class DepEdge:
    src: int
    dst: int
    bytes: float  # payload transferred from src to dst


@dataclass(eq=False)
class MergedDag:
    """Multi-user task graph: one shared Start node, one End node per user.

    For K = 1 this is identical to the single user's DAG. Instances are
    immutable after construction and safe to share across threads.
    """

    nodes: list[Node]
    edges: list[DepEdge]
    K: int
    end_ids: list[int] = field(default_factory=list)  # End node id per user

    def __post_init__(self) -> None:
        if not self.end_ids:
            self.end_ids = [n.id for n in self.nodes if n.kind == END_KIND]
        self._preds: list[list[tuple[int, float]]] | None = None
        self._succs: list[list[int]] | None = None

    # -- derived structure ------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def exec_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind == EXEC_KIND]

    def preds(self, i: int) -> list[tuple[int, float]]:
        """(predecessor id, edge bytes) pairs in ascending id order."""
        if self._preds is None:
            self._build_index()
        return self._preds[i]  # type: ignore[index]

    def succs(self, i: int) -> list[int]:
        if self._succs is None:
            self._build_index()
        return self._succs[i]  # type: ignore[index]

    def _build_index(self) -> None:
        n = self.num_nodes
        preds: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        succs: list[list[int]] = [[] for _ in range(n)]
        for e in sorted(self.edges, key=lambda e: (e.dst, e.src)):
            preds[e.dst].append((e.src, e.bytes))
            succs[e.src].append(e.dst)
        self._preds = preds
        self._succs = [sorted(s) for s in succs]

    def adjacency(self) -> np.ndarray:
        """N x N 0/1 matrix, adj[i, j] = 1 for edge i -> j, unit diagonal."""
        n = self.num_nodes
        adj = np.eye(n, dtype=np.int8)
        for e in self.edges:
            adj[e.src, e.dst] = 1
        return adj

    def in_degree(self, i: int) -> int:
        return len(self.preds(i))

    def out_degree(self, i: int) -> int:
        return len(self.succs(i))

    # -- serialization ----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "K": self.K,
            "nodes": [
                {
                    "id": n.id,
                    "owner": n.owner,
                    "kind": n.kind,
                    "cycles": n.cycles,
                    "upload_bytes": n.upload_bytes,
                }
                for n in self.nodes
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "bytes": e.bytes} for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "MergedDag":
        nodes = [
            Node(
                id=d["id"],
                owner=d["owner"],
                kind=d["kind"],
                cycles=d["cycles"],
                upload_bytes=d["upload_bytes"],
            )
            for d in obj["nodes"]
        ]
        edges = [DepEdge(d["src"], d["dst"], d["bytes"]) for d in obj["edges"]]
        dag = cls(nodes=nodes, edges=edges, K=obj["K"])
        validate_dag(dag)
        return dag

    @classmethod
    def from_json(cls, text: str) -> "MergedDag":
        return cls.from_json_obj(json.loads(text))


@dataclass(frozen=True)
class Platform:
    """K user devices and M edge servers with fixed link rates."""

    K: int
    M: int
    f_ue: float  # cycles/s of every user device (one processor each)
    f_es: float  # cycles/s of every edge-server processor
    procs_per_es: int
    tr_l: float  # bits/s between a user device and any edge server
    tr_s: float  # bits/s between edge servers

    def __post_init__(self) -> None:
        if self.K < 1 or self.M < 0:
            raise ValueError(f"need K >= 1 and M >= 0, got K={self.K} M={self.M}")
        if min(self.f_ue, self.f_es, self.tr_l, self.tr_s) <= 0:
            raise ValueError("rates and clock speeds must be positive")
        if self.procs_per_es < 1:
            raise ValueError("edge servers need at least one processor")

    @property
    def U(self) -> int:
        return self.K + self.M

    def to_json_obj(self) -> dict:
        return {
            "K": self.K,
            "M": self.M,
            "f_ue": self.f_ue,
            "f_es": self.f_es,
            "procs_per_es": self.procs_per_es,
            "tr_l": self.tr_l,
            "tr_s": self.tr_s,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "Platform":
        return cls(
            K=obj["K"],
            M=obj["M"],
            f_ue=obj["f_ue"],
            f_es=obj["f_es"],
            procs_per_es=obj["procs_per_es"],
            tr_l=obj["tr_l"],
            tr_s=obj["tr_s"],
        )


#: A plan is an ordered list of (node_id, location) actions, location using
#: the OWN/server-index encoding above.
Plan = list[tuple[int, int]]


@dataclass(frozen=True)
class PlanViolation:
    kind: str  # NotExec | UnknownNode | Duplicate | DependencyViolation | MissingNode | BadLocation
    position: int  # index into the plan, -1 for whole-plan problems
    node: int  # offending node id, -1 if not applicable

    def __str__(self) -> str:
        return f"{self.kind} at position {self.position} (node {self.node})"


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def build_user_dag(
    nodes: Sequence[tuple[float, float]],
    edges: Iterable[tuple[int, int, float]],
    k: int,
    result_bytes: Mapping[int, float] | None = None,
) -> MergedDag:
    """Build a single user's DAG with Start/End sentinels attached.

    ``nodes`` lists (cycles, upload_bytes) for the executable nodes, indexed
    0..n-1; ``edges`` are (src, dst, bytes) between those indices.
    ``result_bytes`` optionally gives the result payload a sink returns to
    the device (defaults to 0). Nodes are re-indexed topologically with
    Start = 0 and End = n + 1.
    """
    n = len(nodes)
    result_bytes = dict(result_bytes or {})
    edge_list = list(edges)
    for s, d, _ in edge_list:
        if not (0 <= s < n and 0 <= d < n):
            raise InvalidDag(f"edge ({s}, {d}) references an unknown node")
        if s == d:
            raise CycleDetected(f"self-loop on node {s}")

    order = _topological_order(n, [(s, d) for s, d, _ in edge_list])
    rank = {old: i + 1 for i, old in enumerate(order)}  # 1..n, Start takes 0

    out: list[Node] = [Node(0, -1, START_KIND, 0.0, 0.0)]
    for old in order:
        cycles, upload = nodes[old]
        if cycles <= 0:
            raise InvalidDag(f"executable node {old} must have cycles > 0")
        out.append(Node(rank[old], k, EXEC_KIND, cycles, upload))
    end_id = n + 1
    out.append(Node(end_id, k, END_KIND, 0.0, 0.0))

    new_edges = [DepEdge(rank[s], rank[d], b) for s, d, b in edge_list]
    has_pred = {d for _, d, _ in edge_list}
    has_succ = {s for s, _, _ in edge_list}
    for old in order:
        if old not in has_pred:
            new_edges.append(DepEdge(0, rank[old], 0.0))
        if old not in has_succ:
            new_edges.append(DepEdge(rank[old], end_id, float(result_bytes.get(old, 0.0))))
    if n == 0:  # degenerate task with nothing to execute
        new_edges.append(DepEdge(0, end_id, 0.0))

    dag = MergedDag(nodes=out, edges=sorted(new_edges, key=lambda e: (e.src, e.dst)), K=1)
    validate_dag(dag)
    return dag


def merge_dags(dags: Sequence[MergedDag]) -> MergedDag:
    """Merge single-user DAGs into one graph sharing a public Start node.

    User sub-graphs are kept as contiguous id blocks, so the result stays
    topological and per-user node/edge sets map 1:1 onto the inputs.
    """
    if not dags:
        raise ValueError("need at least one input DAG")
    for d in dags:
        if d.K != 1:
            raise InvalidDag("merge inputs must be single-user DAGs")

    nodes: list[Node] = [Node(0, -1, START_KIND, 0.0, 0.0)]
    edges: list[DepEdge] = []
    end_ids: list[int] = []
    offset = 1
    for k, dag in enumerate(dags):
        shift = offset - 1  # old id 1 -> offset
        for n in dag.nodes:
            if n.kind == START_KIND:
                continue
            nodes.append(Node(n.id + shift, k, n.kind, n.cycles, n.upload_bytes))
            if n.kind == END_KIND:
                end_ids.append(n.id + shift)
        for e in dag.edges:
            src = 0 if e.src == 0 else e.src + shift
            edges.append(DepEdge(src, e.dst + shift, e.bytes))
        offset += dag.num_nodes - 1

    merged = MergedDag(
        nodes=nodes,
        edges=sorted(edges, key=lambda e: (e.src, e.dst)),
        K=len(dags),
        end_ids=end_ids,
    )
    validate_dag(merged)
    return merged


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _topological_order(n: int, edges: list[tuple[int, int]]) -> list[int]:
    """Kahn's algorithm, taking the smallest ready input index first."""
    indeg = [0] * n
    succs: list[list[int]] = [[] for _ in range(n)]
    for s, d in edges:
        indeg[d] += 1
        succs[s].append(d)
    import heapq

    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in succs[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != n:
        raise CycleDetected("dependency edges contain a cycle")
    return order


def validate_dag(dag: MergedDag) -> None:
    """Check every structural invariant; raise on the first violation."""
    n = dag.num_nodes
    ids = [node.id for node in dag.nodes]
    if sorted(ids) != list(range(n)):
        raise InvalidDag("node ids must be exactly 0..N-1")
    by_id = {node.id: node for node in dag.nodes}

    if by_id[0].kind != START_KIND:
        raise InvalidDag("node 0 must be the Start node")
    starts = [x for x in dag.nodes if x.kind == START_KIND]
    if len(starts) != 1:
        raise InvalidDag("exactly one Start node required")
    ends = sorted((x for x in dag.nodes if x.kind == END_KIND), key=lambda x: x.id)
    owners = sorted({x.owner for x in dag.nodes if x.kind != START_KIND})
    if owners != list(range(dag.K)) or len(ends) != dag.K:
        raise InvalidDag(f"need one End node per user 0..{dag.K - 1}")
    if sorted(dag.end_ids) != sorted(e.id for e in ends):
        raise InvalidDag("end_ids do not match the End nodes")

    for node in dag.nodes:
        if node.kind in (START_KIND, END_KIND):
            if node.cycles != 0 or node.upload_bytes != 0:
                raise InvalidDag(f"sentinel node {node.id} must carry no work")
        elif node.cycles <= 0:
            raise InvalidDag(f"executable node {node.id} must have cycles > 0")

    seen = set()
    for e in dag.edges:
        if e.src not in by_id or e.dst not in by_id:
            raise InvalidDag(f"edge ({e.src}, {e.dst}) references an unknown node")
        if e.src >= e.dst:
            raise InvalidDag(f"edge ({e.src}, {e.dst}) breaks topological id order")
        if (e.src, e.dst) in seen:
            raise InvalidDag(f"duplicate edge ({e.src}, {e.dst})")
        seen.add((e.src, e.dst))
        if e.src == 0 and e.bytes != 0:
            raise InvalidDag("edges out of Start must carry 0 bytes")
        if by_id[e.src].kind == END_KIND:
            raise InvalidDag(f"End node {e.src} cannot have outgoing edges")
        if e.dst == 0:
            raise InvalidDag("Start cannot have incoming edges")
        if e.src != 0 and by_id[e.src].owner != by_id[e.dst].owner:
            raise InvalidDag(f"cross-user edge ({e.src}, {e.dst})")
        if e.bytes < 0:
            raise InvalidDag(f"edge ({e.src}, {e.dst}) has negative payload")

    # Reachability: every Exec node sits on a Start -> own-End path.
    fwd = _reachable_from(dag, 0, forward=True)
    end_of = {e.id: e.owner for e in ends}
    back: dict[int, set[int]] = {}
    for end_id in dag.end_ids:
        back[end_id] = _reachable_from(dag, end_id, forward=False)
    end_by_owner = {by_id[e].owner: e for e in dag.end_ids}
    for node in dag.nodes:
        if node.kind != EXEC_KIND:
            continue
        if node.id not in fwd:
            raise DisconnectedNode(f"node {node.id} is unreachable from Start")
        if node.id not in back[end_by_owner[node.owner]]:
            raise DisconnectedNode(f"node {node.id} does not reach its End node")
    del end_of


def _reachable_from(dag: MergedDag, root: int, forward: bool) -> set[int]:
    step = dag.succs if forward else (lambda i: [p for p, _ in dag.preds(i)])
    seen = {root}
    stack = [root]
    while stack:
        i = stack.pop()
        for j in step(i):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def validate_plan(
    dag: MergedDag, plan: Plan, M: int | None = None, complete: bool = False
) -> PlanViolation | None:
    """Report the first legality problem of a plan, or None if it is fine.

    A legal plan touches only executable nodes, each at most once, and
    schedules every node after all of its executable predecessors. With
    ``complete=True`` every executable node must appear. ``M`` additionally
    bounds the location indices when given.
    """
    kinds = {n.id: n.kind for n in dag.nodes}
    scheduled: set[int] = set()
    for pos, (node, loc) in enumerate(plan):
        if node not in kinds:
            return PlanViolation("UnknownNode", pos, node)
        if kinds[node] != EXEC_KIND:
            return PlanViolation("NotExec", pos, node)
        if node in scheduled:
            return PlanViolation("Duplicate", pos, node)
        if M is not None and not (0 <= loc <= M):
            return PlanViolation("BadLocation", pos, node)
        for p, _ in dag.preds(node):
            if kinds[p] == EXEC_KIND and p not in scheduled:
                return PlanViolation("DependencyViolation", pos, node)
        scheduled.add(node)
    if complete:
        missing = [i for i in dag.exec_ids if i not in scheduled]
        if missing:
            return PlanViolation("MissingNode", -1, missing[0])
    return None
