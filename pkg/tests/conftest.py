"""Shared fixtures and plan helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from dagsched import EXEC_KIND, GenConfig, MergedDag, Plan, Platform, generate_merged


@pytest.fixture
def plat_single() -> Platform:
    """Single-user defaults: one 10 GHz server processor, 2 Mbps uplink."""
    return Platform(K=1, M=1, f_ue=1e9, f_es=1e10, procs_per_es=1, tr_l=2e6, tr_s=2e7)


@pytest.fixture
def plat_multi() -> Platform:
    """Multi-user defaults: 2 processors per server, 20 Mbps between servers."""
    return Platform(K=3, M=2, f_ue=1e9, f_es=1e10, procs_per_es=2, tr_l=2e6, tr_s=2e7)


def make_platform(K: int = 1, M: int = 1, procs: int = 1) -> Platform:
    return Platform(
        K=K, M=M, f_ue=1e9, f_es=1e10, procs_per_es=procs, tr_l=2e6, tr_s=2e7
    )


def random_plan(dag: MergedDag, M: int, rng: np.random.Generator) -> Plan:
    """Sample a complete dependency-respecting plan.

    Availability is tracked here with plain counters, independent of the
    timing engine, so engine availability bugs cannot hide from tests that
    feed it these plans.
    """
    is_exec = {n.id for n in dag.nodes if n.kind == EXEC_KIND}
    pending = {
        i: sum(1 for p, _ in dag.preds(i) if p in is_exec) for i in is_exec
    }
    ready = sorted(i for i in is_exec if pending[i] == 0)
    plan: Plan = []
    while ready:
        node = ready.pop(int(rng.integers(len(ready))))
        plan.append((node, int(rng.integers(M + 1))))
        for s in dag.succs(node):
            if s in pending:
                pending[s] -= 1
                if pending[s] == 0:
                    ready.append(s)
        ready.sort()
    return plan


def small_instance(
    n: int, K: int, seed: int, max_out: int = 3, alpha: float = 1.0, beta: float = 0.5
) -> MergedDag:
    cfg = GenConfig(
        node_num=n, max_out_degree=max_out, alpha=alpha, beta=beta, seed=seed
    )
    return generate_merged(cfg, K=K, index=0)
