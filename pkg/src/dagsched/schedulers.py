"""Baseline planners: index-order heuristics, HEFT, and exact search.

All planners are pure functions of (dag, platform) plus an explicit seed
or limit where noted; they return a complete dependency-safe plan and
never mutate their inputs.
"""

from __future__ import annotations

import math

import numpy as np

from .model import MergedDag, OWN, Plan, Platform
from .timing import SimState

#: plan_optimal refuses instances with more executable nodes than this.
DEFAULT_OPTIMAL_LIMIT = 12


class TooLarge(ValueError):
    """Instance exceeds the exact planner's executable-node limit."""


def plan_local(dag: MergedDag, platform: Platform | None = None) -> Plan:
    """Every node on its own device, ascending id order."""
    return [(i, OWN) for i in dag.exec_ids]


def plan_remote(dag: MergedDag, platform: Platform | None = None) -> Plan:
    """Every node on an edge server, ascending id order.

    With one server everything goes to Edge(1); with several, node ranks
    cycle through Edge(1)..Edge(M).
    """
    m = platform.M if platform is not None else 1
    if m < 1:
        raise ValueError("plan_remote needs at least one edge server")
    return [(node, (rank % m) + 1) for rank, node in enumerate(dag.exec_ids)]


def plan_round_robin(dag: MergedDag, platform: Platform) -> Plan:
    """Ascending id order; locations cycle Own, Edge(1), .., Edge(M), Own, ..

    The counter is global (owner-independent), and the cycle starts at Own.
    """
    cycle = platform.M + 1
    return [(node, rank % cycle) for rank, node in enumerate(dag.exec_ids)]


def plan_random(dag: MergedDag, platform: Platform, seed: int = 0) -> Plan:
    """Uniform choice over available nodes and locations at every step."""
    rng = np.random.default_rng(seed)
    state = SimState(dag, platform)
    plan: Plan = []
    for _ in dag.exec_ids:
        ava = state.available_ids()
        node = ava[int(rng.integers(len(ava)))]
        loc = int(rng.integers(platform.M + 1))
        state.apply(node, loc)
        plan.append((node, loc))
    return plan


# ---------------------------------------------------------------------------
# HEFT
# ---------------------------------------------------------------------------


def upward_ranks(dag: MergedDag, platform: Platform) -> list[float]:
    """rank(i) = mean execution time + max over successors of (mean
    communication time + successor rank); sentinels rank 0.

    Mean execution averages Own and the M servers; mean communication uses
    the device link rate for every edge (including result edges into End).
    """
    eb = {(e.src, e.dst): e.bytes for e in dag.edges}
    m = platform.M
    ranks = [0.0] * dag.num_nodes
    for node in reversed(dag.nodes):
        if node.kind != "Exec":
            continue
        i = node.id
        wbar = (node.cycles / platform.f_ue + m * node.cycles / platform.f_es) / (m + 1)
        best = 0.0
        for j in dag.succs(i):
            v = 8.0 * eb[(i, j)] / platform.tr_l + ranks[j]
            if v > best:
                best = v
        ranks[i] = wbar + best
    return ranks


def _effective_finish(state: SimState, node: int) -> float:
    """Finish time as the device sees it: FT plus the result download for
    offloaded predecessors of an End node (uses current channel EATs,
    without advancing them)."""
    ft = state.ft[node]
    owner = state.dag.nodes[node].owner
    end = state.dag.end_ids[owner]
    g = state.glob[node]
    if g == owner:
        return ft
    for p, nbytes in state.dag.preds(end):
        if p == node:
            if nbytes == 0.0:
                return ft
            chan = state.chan_eat.get(("e", g, owner), 0.0)
            return max(ft, chan) + 8.0 * nbytes / state.platform.tr_l
    return ft


def plan_heft(dag: MergedDag, platform: Platform) -> Plan:
    """Highest upward rank first; each node takes the location that
    minimizes its (download-adjusted) finish time, tried tentatively in
    the timing engine. Rank ties go to the lower id, location ties to Own
    and then the lowest server index."""
    ranks = upward_ranks(dag, platform)
    order = sorted(dag.exec_ids, key=lambda i: (-ranks[i], i))
    state = SimState(dag, platform)
    plan: Plan = []
    for node in order:
        best_loc = OWN
        best_ft = math.inf
        for loc in range(platform.M + 1):
            rec = state.apply(node, loc)
            ft = _effective_finish(state, node)
            state.undo(rec)
            if ft < best_ft:
                best_ft = ft
                best_loc = loc
        state.apply(node, best_loc)
        plan.append((node, best_loc))
    return plan


# ---------------------------------------------------------------------------
# Exact search
# ---------------------------------------------------------------------------


def plan_optimal(
    dag: MergedDag,
    platform: Platform,
    limit: int = DEFAULT_OPTIMAL_LIMIT,
    prune: bool = True,
) -> Plan:
    """Exact minimizer of mean AFT over dependency-safe orders and
    locations, by depth-first search with branch-and-bound.

    Candidates are tried in ascending (node id, location) order and the
    incumbent only improves strictly, so the returned plan is the
    lexicographically smallest optimum. ``prune=False`` runs the same
    search exhaustively (for cross-checking the bound).
    """
    exec_ids = dag.exec_ids
    n = len(exec_ids)
    if n > limit:
        raise TooLarge(f"{n} executable nodes exceed the limit of {limit}")
    if n == 0:
        return []

    state = SimState(dag, platform)
    K = dag.K
    owners = [node.owner for node in dag.nodes]

    # Static per-node lower bound on the work after this node starts: its
    # own execution at the fastest clock plus the longest such chain below
    # it. Transfers and downloads are >= 0, so this never overestimates.
    f_best = max(platform.f_ue, platform.f_es)
    lp_min = [0.0] * dag.num_nodes
    for node in reversed(dag.nodes):
        if node.kind != "Exec":
            continue
        tail = 0.0
        for j in dag.succs(node.id):
            if lp_min[j] > tail:
                tail = lp_min[j]
        lp_min[node.id] = node.cycles / f_best + tail

    best_val = math.inf
    best_plan: Plan = []
    cur: Plan = []
    per_user = [0.0] * K

    def lower_bound() -> float:
        for k in range(K):
            per_user[k] = 0.0
        for i in exec_ids:
            if state.scheduled[i]:
                v = state.ft[i]
            else:
                ready = 0.0
                for p, _ in state.dag.preds(i):
                    if p != 0 and state.scheduled[p] and state.ft[p] > ready:
                        ready = state.ft[p]
                v = ready + lp_min[i]
            k = owners[i]
            if v > per_user[k]:
                per_user[k] = v
        return sum(per_user) / K

    def dfs() -> None:
        nonlocal best_val, best_plan
        if len(cur) == n:
            afts = state.finish_times(restore=True)
            val = sum(afts) / K
            if val < best_val:
                best_val = val
                best_plan = cur.copy()
            return
        if prune and lower_bound() >= best_val:
            return
        for i in exec_ids:
            if not state.available(i):
                continue
            for loc in range(platform.M + 1):
                rec = state.apply(i, loc)
                cur.append((i, loc))
                dfs()
                cur.pop()
                state.undo(rec)

    dfs()
    return best_plan


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

SCHEDULERS = ("local", "remote", "rr", "random", "heft", "optimal")


def make_plan(
    name: str,
    dag: MergedDag,
    platform: Platform,
    seed: int = 0,
    limit: int = DEFAULT_OPTIMAL_LIMIT,
) -> Plan:
    """Dispatch by scheduler name (see SCHEDULERS for the valid names)."""
    key = name.lower().replace("-", "").replace("_", "")
    if key == "local":
        return plan_local(dag, platform)
    if key == "remote":
        return plan_remote(dag, platform)
    if key in ("rr", "roundrobin"):
        return plan_round_robin(dag, platform)
    if key == "random":
        return plan_random(dag, platform, seed)
    if key == "heft":
        return plan_heft(dag, platform)
    if key == "optimal":
        return plan_optimal(dag, platform, limit)
    raise ValueError(f"unknown scheduler {name!r} (expected one of {SCHEDULERS})")
