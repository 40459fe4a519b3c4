"""Parametric random layered-DAG generator.

Four structure parameters control the shape: ``node_num`` (executable
nodes), ``max_out_degree``, the shape parameter ``alpha`` (larger alpha
gives wider, shallower graphs) and the regularity parameter ``beta``
(larger beta lets level widths spread further from the mean). Attributes
are sampled uniformly from closed ranges. Everything is reproducible from
the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import MergedDag, build_user_dag, merge_dags


class InfeasibleShape(ValueError):
    """max_out_degree is too small to give every next-level node a parent."""


@dataclass(frozen=True)
class GenConfig:
    node_num: int = 10
    max_out_degree: int = 3
    alpha: float = 1.0
    beta: float = 0.5
    seed: int = 0
    cycles_range: tuple[float, float] = (1e8, 1e9)  # cycles
    upload_range: tuple[float, float] = (20e3, 200e3)  # bytes (20..200 KB)
    edge_range: tuple[float, float] = (100e3, 500e3)  # bytes (100..500 KB)

    def __post_init__(self) -> None:
        if self.node_num < 1:
            raise ValueError("node_num must be >= 1")
        if self.max_out_degree < 1:
            raise ValueError("max_out_degree must be >= 1")
        if self.alpha <= 0 or self.beta < 0:
            raise ValueError("need alpha > 0 and beta >= 0")
        for lo, hi in (self.cycles_range, self.upload_range, self.edge_range):
            if not (0 < lo <= hi):
                raise ValueError("attribute ranges must be positive and nonempty")


def level_widths(
    n: int, alpha: float, beta: float, rng: np.random.Generator, max_out: int | None = None
) -> list[int]:
    """Split n nodes over L = max(1, round(sqrt(n)/alpha)) levels.

    Per-level counts are drawn uniformly from
    [ceil((1-beta)*n/L), floor((1+beta)*n/L)] (clamped to >= 1), then
    rescaled so they sum to exactly n with every level keeping >= 1 node.
    When ``max_out`` is given, excess nodes are shifted toward earlier
    levels until width_{l+1} <= width_l * max_out everywhere, so every
    next-level node can get a parent.
    """
    depth = max(1, round(math.sqrt(n) / alpha))
    depth = min(depth, n)
    mean = n / depth
    lo = max(1, math.ceil((1 - beta) * mean))
    hi = max(lo, math.floor((1 + beta) * mean))
    widths = [int(rng.integers(lo, hi + 1)) for _ in range(depth)]

    diff = n - sum(widths)
    i = 0
    while diff != 0:
        w = widths[i % depth]
        if diff > 0:
            widths[i % depth] = w + 1
            diff -= 1
        elif w > 1:
            widths[i % depth] = w - 1
            diff += 1
        i += 1

    if max_out is not None:
        # Each move pushes one node to the previous level; the weighted sum
        # of positions strictly drops, so the repair terminates.
        changed = True
        while changed:
            changed = False
            for lvl in range(1, depth):
                while widths[lvl] > widths[lvl - 1] * max_out:
                    widths[lvl] -= 1
                    widths[lvl - 1] += 1
                    changed = True
    return widths


def connect_levels(
    widths: list[int], max_out: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Wire adjacent levels; every next-level node gets >= 1 parent.

    Nodes are numbered 0..n-1 in level order. Parents are chosen uniformly
    among previous-level nodes with remaining out-degree budget; each node
    may attract extra parents beyond the mandatory one, up to max_out - 1
    and availability.
    """
    edges: list[tuple[int, int]] = []
    start = 0
    budget: dict[int, int] = {}
    for lvl, width in enumerate(widths):
        ids = list(range(start, start + width))
        if lvl > 0:
            prev = list(range(start - widths[lvl - 1], start))
            if len(prev) * max_out < width:
                raise InfeasibleShape(
                    f"level {lvl} needs {width} parent slots but only "
                    f"{len(prev) * max_out} are available at max_out={max_out}"
                )
            total = len(prev) * max_out
            for q, v in enumerate(ids):
                avail = [u for u in prev if budget[u] > 0]
                u = int(avail[rng.integers(0, len(avail))])
                edges.append((u, v))
                budget[u] -= 1
                total -= 1
                # Extras must not starve the mandatory parent of a later node.
                reserve = width - q - 1
                others = [u2 for u2 in prev if budget[u2] > 0 and u2 != u]
                cap = min(len(others), max_out - 1, total - reserve)
                extra = int(rng.integers(0, cap + 1)) if cap > 0 else 0
                if extra:
                    picks = rng.choice(len(others), size=extra, replace=False)
                    for idx in sorted(int(p) for p in picks):
                        u2 = others[idx]
                        edges.append((u2, v))
                        budget[u2] -= 1
                        total -= 1
        for v in ids:
            budget[v] = max_out
        start += width
    return edges


def _sample(rng: np.random.Generator, lo: float, hi: float) -> float:
    """Uniform integer draw from the closed range (attribute values are counts)."""
    return float(rng.integers(int(lo), int(hi) + 1))


def generate(config: GenConfig, owner: int = 0, rng: np.random.Generator | None = None) -> MergedDag:
    """Generate one user DAG (Start/End sentinels included)."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.node_num
    widths = level_widths(n, config.alpha, config.beta, rng, config.max_out_degree)
    edges = connect_levels(widths, config.max_out_degree, rng)

    nodes = [
        (
            _sample(rng, *config.cycles_range),
            _sample(rng, *config.upload_range),
        )
        for _ in range(n)
    ]
    attr_edges = [(s, d, _sample(rng, *config.edge_range)) for s, d in edges]
    sinks = set(range(n)) - {s for s, _ in edges}
    result_bytes = {v: _sample(rng, *config.edge_range) for v in sorted(sinks)}
    return build_user_dag(nodes, attr_edges, owner, result_bytes)


def generate_merged(config: GenConfig, K: int, index: int = 0) -> MergedDag:
    """Merge K independently generated user DAGs, deterministic in (seed, index)."""
    users = []
    for k in range(K):
        rng = np.random.default_rng([config.seed, index, k])
        users.append(generate(config, owner=0, rng=rng))
    return merge_dags(users)


def generate_batch(config: GenConfig, count: int, K: int = 1) -> list[MergedDag]:
    """A dataset of ``count`` merged instances, deterministic from (seed, index)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [generate_merged(config, K, index=i) for i in range(count)]
