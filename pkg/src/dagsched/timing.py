"""Deterministic timing engine: turns plans into start/finish times and AFTs.

Bookkeeping is a set of Estimated Available Times (EATs), one per
contended resource:

* one EAT per processor (user devices have 1, edge servers ``procs_per_es``),
* one uplink EAT per user device (program-data uploads, serialized in
  action order; uploads may start at time 0 because code data is available
  before predecessors finish),
* one outgoing transfer channel per user device,
* per edge server, one transfer channel per peer (K devices + M-1 servers);
  result downloads ride the server's per-device channel.

Applying an action advances exactly one processor EAT plus the channels it
used. Predecessors are processed in ascending id order and processor ties
break to the lowest index, so evaluation is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import EXEC_KIND, MergedDag, OWN, Plan, Platform


class IllegalAction(Exception):
    """Action touches a node that is unavailable or already scheduled."""


@dataclass
class EvalResult:
    """Schedule of a (completed) plan: per-node times and per-user AFTs."""

    st: list[float]
    ft: list[float]
    loc: list[int]  # offloading-location index per node, -1 for sentinels
    aft: list[float]  # per user, the start time of its End node
    mean_aft: float


class SimState:
    """Mutable EAT bookkeeping for one evaluation. Single-owner, not shared."""

    __slots__ = (
        "dag",
        "platform",
        "proc_eat",
        "uplink_eat",
        "chan_eat",
        "loc",
        "glob",
        "st",
        "ft",
        "pending",
        "scheduled",
        "steps",
        "_is_exec",
        "_owner",
        "_cycles",
        "_upload",
    )

    def __init__(self, dag: MergedDag, platform: Platform):
        if platform.K != dag.K:
            raise ValueError(f"platform has K={platform.K} but DAG has K={dag.K}")
        self.dag = dag
        self.platform = platform
        n = dag.num_nodes
        K = platform.K
        self.proc_eat = [[0.0] for _ in range(K)] + [
            [0.0] * platform.procs_per_es for _ in range(platform.M)
        ]
        self.uplink_eat = [0.0] * K
        self.chan_eat: dict[tuple, float] = {}
        self.loc = [-1] * n
        self.glob = [-1] * n
        self.st = [0.0] * n
        self.ft = [0.0] * n
        self.pending = [0] * n
        self.scheduled = [False] * n
        self.steps = 0
        self._is_exec = [node.kind == EXEC_KIND for node in dag.nodes]
        self._owner = [node.owner for node in dag.nodes]
        self._cycles = [node.cycles for node in dag.nodes]
        self._upload = [node.upload_bytes for node in dag.nodes]
        for i in range(n):
            self.pending[i] = sum(
                1 for p, _ in dag.preds(i) if self._is_exec[p]
            )
        self.scheduled[0] = True  # Start completes at t = 0

    # -- queries ------------------------------------------------------------

    def available(self, i: int) -> bool:
        """True iff node i is executable, unscheduled, and all preds are done."""
        return self._is_exec[i] and not self.scheduled[i] and self.pending[i] == 0

    def available_ids(self) -> list[int]:
        return [i for i in self.dag.exec_ids if self.available(i)]

    def device_eat(self, g: int) -> float:
        """Min processor EAT of global location g (devices first, then servers)."""
        return min(self.proc_eat[g])

    def snapshot(self) -> tuple:
        """Comparable, bit-exact image of the whole state."""
        return (
            tuple(tuple(p) for p in self.proc_eat),
            tuple(self.uplink_eat),
            tuple(sorted((k, v) for k, v in self.chan_eat.items())),
            tuple(self.loc),
            tuple(self.st),
            tuple(self.ft),
            tuple(self.scheduled),
            self.steps,
        )

    # -- mutation -----------------------------------------------------------

    def apply(self, node: int, loc: int) -> tuple:
        """Schedule one executable node; returns an undo record."""
        if not (0 <= node < self.dag.num_nodes) or not self._is_exec[node]:
            raise IllegalAction(f"node {node} is not an executable node")
        if self.scheduled[node]:
            raise IllegalAction(f"node {node} is already scheduled")
        if self.pending[node] > 0:
            raise IllegalAction(f"node {node} has unscheduled predecessors")
        plat = self.platform
        K = plat.K
        if not (0 <= loc <= plat.M):
            raise IllegalAction(f"location index {loc} out of range 0..{plat.M}")
        owner = self._owner[node]
        g = owner if loc == OWN else K + loc - 1

        old_uplink = -1.0
        upload_finish = 0.0
        if loc != OWN:
            old_uplink = self.uplink_eat[owner]
            upload_finish = old_uplink + 8.0 * self._upload[node] / plat.tr_l
            self.uplink_eat[owner] = upload_finish

        arrival = 0.0
        chan_changes: list[tuple[tuple, float | None]] = []
        for p, nbytes in self.dag.preds(node):
            if p == 0:
                continue  # Start carries no data
            gp = self.glob[p]
            if gp == g or nbytes == 0.0:
                a = self.ft[p]  # co-located, or nothing to send
            else:
                if gp < K:
                    key = ("u", gp)
                    rate = plat.tr_l
                else:
                    key = ("e", gp, g)
                    rate = plat.tr_s if g >= K else plat.tr_l
                old = self.chan_eat.get(key)
                start = self.ft[p] if old is None or old < self.ft[p] else old
                a = start + 8.0 * nbytes / rate
                chan_changes.append((key, old))
                self.chan_eat[key] = a
            if a > arrival:
                arrival = a

        procs = self.proc_eat[g]
        p_idx = min(range(len(procs)), key=procs.__getitem__)
        old_proc = procs[p_idx]
        st = max(old_proc, upload_finish, arrival)
        ft = st + self._cycles[node] / (plat.f_ue if loc == OWN else plat.f_es)
        procs[p_idx] = ft

        self.loc[node] = loc
        self.glob[node] = g
        self.st[node] = st
        self.ft[node] = ft
        self.scheduled[node] = True
        self.steps += 1
        for s in self.dag.succs(node):
            self.pending[s] -= 1
        return (node, owner, old_uplink, chan_changes, g, p_idx, old_proc)

    def undo(self, record: tuple) -> None:
        """Reverse one apply(); records must be undone in LIFO order."""
        node, owner, old_uplink, chan_changes, g, p_idx, old_proc = record
        for s in self.dag.succs(node):
            self.pending[s] += 1
        self.steps -= 1
        self.scheduled[node] = False
        self.loc[node] = -1
        self.glob[node] = -1
        self.st[node] = 0.0
        self.ft[node] = 0.0
        self.proc_eat[g][p_idx] = old_proc
        for key, old in reversed(chan_changes):
            if old is None:
                del self.chan_eat[key]
            else:
                self.chan_eat[key] = old
        if old_uplink >= 0.0:
            self.uplink_eat[owner] = old_uplink

    def finish_times(self, restore: bool = True) -> list[float]:
        """Per-user AFT: End start times, including result downloads.

        Offloaded predecessors of an End node return their payload over the
        server's channel to the owner device at rate tr_l; device-local
        predecessors contribute their finish time directly. With
        ``restore=True`` the touched channels are rolled back, leaving the
        state unchanged.
        """
        plat = self.platform
        K = plat.K
        changes: list[tuple[tuple, float | None]] = []
        afts: list[float] = []
        for k in range(K):
            end = self.dag.end_ids[k]
            best = 0.0
            for p, nbytes in self.dag.preds(end):
                if p == 0:
                    continue  # user task with no executable nodes
                gp = self.glob[p]
                if gp == k or nbytes == 0.0:
                    c = self.ft[p]
                else:
                    key = ("e", gp, k)
                    old = self.chan_eat.get(key)
                    start = self.ft[p] if old is None or old < self.ft[p] else old
                    c = start + 8.0 * nbytes / plat.tr_l
                    changes.append((key, old))
                    self.chan_eat[key] = c
                if c > best:
                    best = c
            afts.append(best)
        if restore:
            for key, old in reversed(changes):
                if old is None:
                    del self.chan_eat[key]
                else:
                    self.chan_eat[key] = old
        return afts


# ---------------------------------------------------------------------------
# Closed-form node costs (exposed mostly for tests and ranking heuristics)
# ---------------------------------------------------------------------------


def upload_time(upload_bytes: float, platform: Platform, offloaded: bool) -> float:
    """Program-data upload cost; zero when the node runs on its own device."""
    if not offloaded:
        return 0.0
    return 8.0 * upload_bytes / platform.tr_l


def transmission_time(nbytes: float, src_g: int, dst_g: int, platform: Platform) -> float:
    """Edge-payload transfer cost between resolved global locations."""
    if src_g == dst_g:
        return 0.0
    both_es = src_g >= platform.K and dst_g >= platform.K
    rate = platform.tr_s if both_es else platform.tr_l
    return 8.0 * nbytes / rate


def execution_time(cycles: float, platform: Platform, offloaded: bool) -> float:
    return cycles / (platform.f_es if offloaded else platform.f_ue)


def download_time(result_bytes: float, platform: Platform, offloaded: bool) -> float:
    """Result return cost for a predecessor of an End node."""
    if not offloaded:
        return 0.0
    return 8.0 * result_bytes / platform.tr_l


# ---------------------------------------------------------------------------
# Plan evaluation
# ---------------------------------------------------------------------------


def apply_action(state: SimState, node: int, loc: int) -> SimState:
    """Apply one action in place (thin wrapper keeping the record internal)."""
    state.apply(node, loc)
    return state


def evaluate_partial(dag: MergedDag, platform: Platform, prefix: Plan) -> EvalResult:
    """Evaluate a plan prefix completed by running the rest on own devices.

    The prefix is applied in order on a fresh state; every remaining
    executable node is then scheduled to its owner's device in ascending id
    order. The mean AFT of the result is the estimated finish time that
    drives the per-step reward.
    """
    state = SimState(dag, platform)
    for node, loc in prefix:
        state.apply(node, loc)
    for i in dag.exec_ids:
        if not state.scheduled[i]:
            state.apply(i, OWN)
    afts = state.finish_times(restore=False)
    st, ft, loc_out = list(state.st), list(state.ft), list(state.loc)
    for k, end in enumerate(dag.end_ids):
        st[end] = ft[end] = afts[k]
    return EvalResult(st=st, ft=ft, loc=loc_out, aft=afts, mean_aft=sum(afts) / dag.K)


def mean_local_aft(dag: MergedDag, platform: Platform) -> float:
    """Baseline: everything on its own device in id order (empty prefix)."""
    return evaluate_partial(dag, platform, []).mean_aft


def reward(
    dag: MergedDag, platform: Platform, prefix_without: Plan, prefix_with: Plan
) -> float:
    """Per-step reward: drop in mean estimated finish time, may be negative."""
    if len(prefix_with) != len(prefix_without) + 1 or prefix_with[:-1] != prefix_without:
        raise ValueError("prefix_with must extend prefix_without by exactly one action")
    before = evaluate_partial(dag, platform, prefix_without).mean_aft
    after = evaluate_partial(dag, platform, prefix_with).mean_aft
    return before - after
