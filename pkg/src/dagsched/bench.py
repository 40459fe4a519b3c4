"""Experiment harness: scheduler grids, CSV emission, dataset persistence.

Grid runs are pure functions of (config, seed): instance streams derive
from per-cell seeds, Random-scheduler repetitions from per-(instance, rep)
seeds, and accumulation order is fixed, so rerunning a grid reproduces the
CSV byte for byte.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .generator import GenConfig, generate_merged
from .model import MergedDag, Plan, Platform, validate_plan
from .schedulers import DEFAULT_OPTIMAL_LIMIT, make_plan, plan_random
from .timing import IllegalAction, evaluate_partial

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

CSV_COLUMNS = ("n", "K", "M", "scheduler", "mean_aft_s", "instances")

#: Scenario defaults: processors per edge server.
_SCENARIO_PROCS = {"single": 1, "multi": 2}


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark grid: instance sizes x platform shapes x schedulers."""

    scenario: str = "single"
    n: tuple[int, ...] = (10, 15, 20, 25, 30, 35, 40, 45, 50)
    k: tuple[int, ...] = (1,)
    m: tuple[int, ...] = (1,)
    instances: int = 50
    random_reps: int = 50
    schedulers: tuple[str, ...] = ("local", "remote", "rr", "random", "heft")
    seed: int = 0
    optimal_limit: int = DEFAULT_OPTIMAL_LIMIT
    # generator shape
    max_out_degree: int = 3
    alpha: float = 1.0
    beta: float = 0.5
    # platform; procs_per_es=None takes the scenario default (1 or 2)
    f_ue: float = 1e9
    f_es: float = 1e10
    tr_l: float = 2e6
    tr_s: float = 2e7
    procs_per_es: int | None = None

    def __post_init__(self) -> None:
        if self.scenario not in _SCENARIO_PROCS:
            raise ValueError(f"scenario must be one of {sorted(_SCENARIO_PROCS)}")
        for name in ("n", "k", "m", "schedulers"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if self.instances < 1 or self.random_reps < 1:
            raise ValueError("instances and random_reps must be >= 1")

    def platform(self, K: int, M: int) -> Platform:
        procs = self.procs_per_es
        if procs is None:
            procs = _SCENARIO_PROCS[self.scenario]
        return Platform(
            K=K,
            M=M,
            f_ue=self.f_ue,
            f_es=self.f_es,
            procs_per_es=procs,
            tr_l=self.tr_l,
            tr_s=self.tr_s,
        )

    def gen_config(self, n: int, K: int, M: int) -> GenConfig:
        return GenConfig(
            node_num=n,
            max_out_degree=self.max_out_degree,
            alpha=self.alpha,
            beta=self.beta,
            seed=_derive_seed(self.seed, n, K, M),
        )


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def load_experiment(path: str | Path) -> ExperimentConfig:
    """Read an ExperimentConfig from a TOML file.

    Scalars and lists use the dataclass field names; [platform] and
    [generator] tables override the corresponding fields.
    """
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    kwargs: dict = {}
    for key in ("scenario", "instances", "random_reps", "seed", "optimal_limit"):
        if key in raw:
            kwargs[key] = raw[key]
    for key in ("n", "k", "m", "schedulers"):
        if key in raw:
            kwargs[key] = tuple(raw[key])
    for key in ("f_ue", "f_es", "tr_l", "tr_s", "procs_per_es"):
        if key in raw.get("platform", {}):
            kwargs[key] = raw["platform"][key]
    for key in ("max_out_degree", "alpha", "beta"):
        if key in raw.get("generator", {}):
            kwargs[key] = raw["generator"][key]
    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# Grid runs
# ---------------------------------------------------------------------------


def run_grid(config: ExperimentConfig) -> list[dict]:
    """One row per (n, K, M, scheduler): mean AFT over the cell's instances.

    Random is additionally averaged over ``random_reps`` seeds per
    instance. Optimal cells whose instances exceed the executable-node
    limit come back as mean_aft_s="NA" with instances=0.
    """
    rows: list[dict] = []
    for n in config.n:
        for K in config.k:
            for M in config.m:
                platform = config.platform(K, M)
                cfg = config.gen_config(n, K, M)
                dags = [
                    generate_merged(cfg, K=K, index=i)
                    for i in range(config.instances)
                ]
                cell_seed = cfg.seed
                for name in config.schedulers:
                    rows.append(
                        _cell_row(config, name, n, K, M, platform, dags, cell_seed)
                    )
    return rows


def _cell_row(
    config: ExperimentConfig,
    name: str,
    n: int,
    K: int,
    M: int,
    platform: Platform,
    dags: Sequence[MergedDag],
    cell_seed: int,
) -> dict:
    base = {"n": n, "K": K, "M": M, "scheduler": name}
    if name == "optimal" and n * K > config.optimal_limit:
        return {**base, "mean_aft_s": "NA", "instances": 0}
    total = 0.0
    for i, dag in enumerate(dags):
        if name == "random":
            acc = 0.0
            for rep in range(config.random_reps):
                seed = _derive_seed(cell_seed, i, rep)
                plan = plan_random(dag, platform, seed=seed)
                acc += evaluate_partial(dag, platform, plan).mean_aft
            total += acc / config.random_reps
        else:
            plan = make_plan(name, dag, platform, limit=config.optimal_limit)
            total += evaluate_partial(dag, platform, plan).mean_aft
    return {**base, "mean_aft_s": total / len(dags), "instances": len(dags)}


def to_csv(rows: Sequence[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def summarize(rows: Sequence[dict]) -> str:
    """Human-readable report: per-scheduler means, ratios vs the exact
    planner, and the expected ordering checks, each with pass/fail."""
    if not rows:
        raise ValueError("no results to summarize")
    numeric = [r for r in rows if r["mean_aft_s"] != "NA"]
    by_sched: dict[str, list[float]] = {}
    for r in numeric:
        by_sched.setdefault(r["scheduler"], []).append(r["mean_aft_s"])
    out = ["== mean AFT by scheduler (s) =="]
    for name in sorted(by_sched):
        vals = by_sched[name]
        out.append(f"{name}: {sum(vals) / len(vals):.6f} over {len(vals)} cells")

    cells: dict[tuple, dict[str, float]] = {}
    for r in numeric:
        cells.setdefault((r["n"], r["K"], r["M"]), {})[r["scheduler"]] = r[
            "mean_aft_s"
        ]
    ratio_lines = []
    for key in sorted(cells):
        cell = cells[key]
        if "optimal" not in cell:
            continue
        for name in sorted(cell):
            if name == "optimal":
                continue
            ratio_lines.append(
                f"n={key[0]} K={key[1]} M={key[2]} {name}/optimal: "
                f"{cell[name] / cell['optimal']:.4f}"
            )
    if ratio_lines:
        out.append("== ratios vs optimal ==")
        out.extend(ratio_lines)

    order_lines = []
    for key in sorted(cells):
        cell = cells[key]
        if not {"heft", "rr", "local"} <= set(cell):
            continue
        ok = cell["heft"] < cell["rr"] < cell["local"]
        order_lines.append(
            f"[{'PASS' if ok else 'FAIL'}] heft < rr < local at "
            f"n={key[0]} K={key[1]} M={key[2]}"
        )
    if order_lines:
        out.append("== ordering checks ==")
        out.extend(order_lines)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Dataset and platform persistence
# ---------------------------------------------------------------------------


def save_dataset(directory: str | Path, config: GenConfig, count: int, K: int) -> None:
    """Write instance_0000.json .. and a manifest describing the stream."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        dag = generate_merged(config, K=K, index=i)
        path = directory / f"instance_{i:04d}.json"
        path.write_text(json.dumps(dag.to_json_obj(), indent=2) + "\n")
    manifest = {"version": 1, "count": count, "K": K, "config": asdict(config)}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(directory: str | Path) -> list[tuple[str, MergedDag]]:
    """Instances sorted by file name; the manifest is not required."""
    directory = Path(directory)
    pairs = []
    for path in sorted(directory.glob("*.json")):
        if path.name == "manifest.json":
            continue
        pairs.append((path.stem, MergedDag.from_json(path.read_text())))
    if not pairs:
        raise FileNotFoundError(f"no instance .json files under {directory}")
    return pairs


def load_manifest(directory: str | Path) -> dict | None:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def save_platform(path: str | Path, platform: Platform) -> None:
    Path(path).write_text(json.dumps(platform.to_json_obj(), indent=2) + "\n")


def load_platform(path: str | Path) -> Platform:
    return Platform.from_json_obj(json.loads(Path(path).read_text()))


def save_plan(path: str | Path, plan: Plan) -> None:
    obj = [{"node": node, "loc": loc} for node, loc in plan]
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_plan(path: str | Path) -> Plan:
    obj = json.loads(Path(path).read_text())
    return [(int(d["node"]), int(d["loc"])) for d in obj]


# ---------------------------------------------------------------------------
# Transcript replay
# ---------------------------------------------------------------------------


def replay_agent(
    dataset_dir: str | Path, platform: Platform, transcript: str | Path
) -> dict:
    """Score an externally recorded action log against a dataset.

    The transcript is .jsonl: each line {"instance": name-or-index,
    "actions": [[node, loc], ...]}. Partial logs are completed on-device,
    matching the estimated-finish-time semantics. Raises IllegalAction or
    ValueError with the offending 1-based line number.
    """
    dataset = load_dataset(dataset_dir)
    names = [name for name, _ in dataset]
    per_instance = []
    total = 0.0
    with open(transcript) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: bad JSON at col {exc.colno}") from exc
            ref = obj.get("instance")
            if type(ref) is int and 0 <= ref < len(dataset):
                name, dag = dataset[ref]
            elif isinstance(ref, str) and ref in names:
                name, dag = dataset[names.index(ref)]
            else:
                raise ValueError(f"line {lineno}: unknown instance {ref!r}")
            actions = [(int(a[0]), int(a[1])) for a in obj.get("actions", [])]
            bad = validate_plan(dag, actions, M=platform.M)
            if bad is not None:
                raise IllegalAction(f"line {lineno}: {bad}")
            value = evaluate_partial(dag, platform, actions).mean_aft
            per_instance.append({"instance": name, "mean_aft_s": value})
            total += value
    if not per_instance:
        raise ValueError("transcript contains no episodes")
    return {
        "count": len(per_instance),
        "mean_aft_s": total / len(per_instance),
        "per_instance": per_instance,
    }


def replay_row(
    report: dict, label: str, n: int, K: int, M: int
) -> dict:
    """Format a replay report as a CSV row compatible with run_grid."""
    return {
        "n": n,
        "K": K,
        "M": M,
        "scheduler": label,
        "mean_aft_s": report["mean_aft_s"],
        "instances": report["count"],
    }
