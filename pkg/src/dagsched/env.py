"""Scheduling MDP: raw observations, masked actions, finish-time rewards.

One episode schedules every executable node of one instance. The
observation is deliberately raw (SI units, no normalization) so the
environment stays bit-stable; scaling is the agent's concern.

Action legality equals the engine's availability: a node can be acted on
iff it is executable, unscheduled, and all its executable predecessors are
scheduled (the Start sentinel is auto-completed at reset, so its
successors are available immediately even though its loc stays -1).
"""

from __future__ import annotations

from .model import MergedDag, Plan, Platform
from .timing import IllegalAction, SimState, evaluate_partial

#: Per-node observation row, in column order.
NODE_FEATURES = ("cycles", "upload_bytes", "in_degree", "out_degree", "loc", "ava")
#: Per-location observation row: min processor EAT and the clock speed.
LOCATION_FEATURES = ("eat", "clock")


class MaskedAction(Exception):
    """The acted-on node is not available (or not an executable node)."""


class NoEpisode(Exception):
    """step() before reset(), or after the episode finished."""


class Env:
    """Deterministic single-instance environment over the timing engine."""

    def __init__(self, dag: MergedDag, platform: Platform):
        self.dag = dag
        self.platform = platform
        self.num_exec = len(dag.exec_ids)
        self._state: SimState | None = None
        self._prefix: Plan = []
        self._eft = 0.0
        self.baseline_aft = evaluate_partial(dag, platform, []).mean_aft

    @property
    def action_dims(self) -> tuple[int, int]:
        return (self.dag.num_nodes, self.platform.M + 1)

    @property
    def t(self) -> int:
        return len(self._prefix)

    @property
    def done(self) -> bool:
        return self._state is not None and self.t == self.num_exec

    def reset(self) -> tuple[dict, dict]:
        self._state = SimState(self.dag, self.platform)
        self._prefix = []
        self._eft = self.baseline_aft
        info = {
            "num_nodes": self.dag.num_nodes,
            "num_exec": self.num_exec,
            "baseline_aft": self.baseline_aft,
        }
        return self.observation(), info

    def step(self, node: int, loc: int) -> tuple[dict, float, bool, dict]:
        if self._state is None:
            raise NoEpisode("reset() must be called before step()")
        if self.done:
            raise NoEpisode("episode finished; call reset()")
        if not (0 <= loc <= self.platform.M):
            raise ValueError(f"location index {loc} out of range 0..{self.platform.M}")
        if not (isinstance(node, int) and 0 <= node < self.dag.num_nodes):
            raise MaskedAction(f"node {node} does not exist")
        if not self._state.available(node):
            raise MaskedAction(f"node {node} is not available")
        try:
            self._state.apply(node, loc)
        except IllegalAction as exc:  # pragma: no cover - guarded above
            raise MaskedAction(str(exc)) from exc
        self._prefix.append((node, loc))
        eft = evaluate_partial(self.dag, self.platform, self._prefix).mean_aft
        reward = self._eft - eft
        self._eft = eft
        info = {"mean_aft": eft, "baseline_aft": self.baseline_aft}
        return self.observation(), reward, self.done, info

    def observation(self) -> dict:
        if self._state is None:
            raise NoEpisode("reset() must be called before observing")
        state = self._state
        dag = self.dag
        plat = self.platform
        rows = []
        mask = []
        for node in dag.nodes:
            i = node.id
            ava = state.available(i)
            rows.append(
                [
                    node.cycles,
                    node.upload_bytes,
                    dag.in_degree(i),
                    dag.out_degree(i),
                    state.loc[i],
                    int(ava),
                ]
            )
            mask.append(ava)
        locations = [[state.device_eat(k), plat.f_ue] for k in range(plat.K)] + [
            [state.device_eat(plat.K + m), plat.f_es] for m in range(plat.M)
        ]
        return {
            "node_features": rows,
            "adjacency": [[e.src, e.dst] for e in dag.edges],
            "location_features": locations,
            "node_mask": mask,
            "t": self.t,
        }

    def prefix(self) -> Plan:
        """Actions taken so far (copy)."""
        return list(self._prefix)

    def spec_obj(self) -> dict:
        """Static description of shapes, heads, and units."""
        return {
            "num_nodes": self.dag.num_nodes,
            "num_exec": self.num_exec,
            "num_users": self.platform.K,
            "num_servers": self.platform.M,
            "num_locations": self.platform.U,
            "action_dims": list(self.action_dims),
            "node_features": list(NODE_FEATURES),
            "location_features": list(LOCATION_FEATURES),
            "units": {
                "time": "s",
                "cycles": "cycles",
                "data": "bytes",
                "rate": "bits/s",
            },
        }
