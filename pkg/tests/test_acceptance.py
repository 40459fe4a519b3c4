"""Acceptance gate: the behavioral guarantees this package ships with.

One test per guarantee; each prints a single [PASS]/[FAIL] line with the
measured numbers (visible with -s, or in the report of a failing test).
Tolerances are pinned here and nowhere else. A failing line means the
guarantee does not hold as stated; see the failure message for the
measured evidence.
"""

import time

import numpy as np
import pytest

from dagsched import (
    EXEC_KIND,
    Env,
    ExperimentConfig,
    GenConfig,
    Platform,
    SimState,
    evaluate_partial,
    generate_merged,
    make_plan,
    plan_optimal,
    run_grid,
    to_csv,
)


def platform_53(M: int = 1, K: int = 1) -> Platform:
    """1 GHz UEs, one 10 GHz processor per ES, 2 Mbps up/down, 20 Mbps ES-ES."""
    return Platform(K=K, M=M, f_ue=1e9, f_es=1e10, procs_per_es=1,
                    tr_l=2e6, tr_s=2e7)


def seeds(root: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(root).generate_state(count)]


def report(ok: bool, name: str, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    return line


class TestAcceptance:
    def test_local_baseline_closed_form(self):
        # 200 instances over mixed K and n: all-local mean AFT must equal
        # (1/K) sum_k sum_i C_i / f_ue to < 1e-9 relative, in < 5 s.
        t0 = time.perf_counter()
        worst = 0.0
        for i, seed in enumerate(seeds(101, 200)):
            n = 1 + i % 12
            K = 1 + i % 4
            dag = generate_merged(GenConfig(node_num=n, seed=seed), K=K)
            platform = Platform(K=K, M=1 + i % 3, f_ue=1e9, f_es=1e10,
                                procs_per_es=1 + i % 2, tr_l=2e6, tr_s=2e7)
            got = evaluate_partial(dag, platform, make_plan("local", dag, platform))
            want = sum(
                x.cycles / platform.f_ue for x in dag.nodes if x.kind == EXEC_KIND
            ) / K
            worst = max(worst, abs(got.mean_aft - want) / want)
        elapsed = time.perf_counter() - t0
        ok = worst < 1e-9 and elapsed < 5.0
        line = report(ok, "local closed form",
                      f"200 instances, worst rel err {worst:.2e}, {elapsed:.2f} s")
        assert worst < 1e-9, line
        assert elapsed < 5.0, line

    def test_reward_telescoping(self):
        # 100 random complete episodes: step rewards must telescope to
        # (baseline mean AFT - final mean AFT) within 1e-6 s absolute.
        worst = 0.0
        for i, seed in enumerate(seeds(202, 100)):
            rng = np.random.default_rng(seed)
            K = 1 + i % 3
            M = 1 + i % 2
            dag = generate_merged(GenConfig(node_num=2 + i % 7, seed=seed), K=K)
            env = Env(dag, Platform(K=K, M=M, f_ue=1e9, f_es=1e10,
                                    procs_per_es=1 + i % 2, tr_l=2e6, tr_s=2e7))
            obs, info = env.reset()
            baseline = info["baseline_aft"]
            total = 0.0
            while not env.done:
                choices = [j for j, m in enumerate(obs["node_mask"]) if m]
                node = int(choices[rng.integers(0, len(choices))])
                loc = int(rng.integers(0, M + 1))
                obs, r, done, step_info = env.step(node, loc)
                total += r
            worst = max(worst, abs(total - (baseline - step_info["mean_aft"])))
        ok = worst < 1e-6
        line = report(ok, "reward telescoping",
                      f"100 episodes, worst |sum r - (base - final)| {worst:.2e} s")
        assert ok, line

    def test_exact_planner_dominance(self):
        # 50 instances of <= 8 exec nodes on the single-user single-edge
        # platform: branch-and-bound must match full enumeration exactly and
        # its value must be <= every baseline on every instance. < 10 min.
        t0 = time.perf_counter()
        platform = platform_53()
        baselines = ("local", "remote", "rr", "random", "heft")
        violations = []
        for i, seed in enumerate(seeds(303, 50)):
            n = 4 + i % 5
            dag = generate_merged(GenConfig(node_num=n, seed=seed), K=1)
            pruned = plan_optimal(dag, platform)
            full = plan_optimal(dag, platform, prune=False)
            if pruned != full:
                violations.append(f"instance {i}: pruning changed the plan")
                continue
            opt = evaluate_partial(dag, platform, pruned).mean_aft
            for name in baselines:
                plan = make_plan(name, dag, platform, seed=seed)
                val = evaluate_partial(dag, platform, plan).mean_aft
                if opt > val:
                    violations.append(
                        f"instance {i}: optimal {opt:.6f} > {name} {val:.6f}")
        elapsed = time.perf_counter() - t0
        ok = not violations and elapsed < 600.0
        line = report(ok, "exact planner dominance",
                      f"50 instances x {len(baselines)} baselines, "
                      f"{len(violations)} violations, {elapsed:.1f} s")
        assert not violations, line + "; " + "; ".join(violations[:5])
        assert elapsed < 600.0, line

    def test_incremental_matches_recompute_oracle(self):
        # 100 random complete plans: stepping one state forward must match a
        # fresh state rebuilt from scratch at every prefix, bit for bit.
        mismatches = 0
        for i, seed in enumerate(seeds(404, 100)):
            rng = np.random.default_rng(seed)
            K = 1 + i % 3
            M = 1 + i % 3
            dag = generate_merged(GenConfig(node_num=2 + i % 6, seed=seed), K=K)
            platform = Platform(K=K, M=M, f_ue=1e9, f_es=1e10,
                                procs_per_es=1 + i % 2, tr_l=2e6, tr_s=2e7)
            incremental = SimState(dag, platform)
            prefix = []
            while incremental.available_ids():
                ids = incremental.available_ids()
                node = int(ids[rng.integers(0, len(ids))])
                loc = int(rng.integers(0, M + 1))
                incremental.apply(node, loc)
                prefix.append((node, loc))
                fresh = SimState(dag, platform)
                for a_node, a_loc in prefix:
                    fresh.apply(a_node, a_loc)
                if fresh.snapshot() != incremental.snapshot():
                    mismatches += 1
                    break
        ok = mismatches == 0
        line = report(ok, "incremental vs recompute",
                      f"100 plans, every prefix compared, {mismatches} mismatches")
        assert ok, line

    def test_heuristic_ordering_across_sizes(self):
        # For each n in 10..50 step 5, over 50 instances on the single-user
        # single-edge platform: mean(HEFT) < mean(RR) < mean(Local). < 5 min.
        #
        # Known red. The rr < local half cannot hold under this timing
        # model: alternating assignment sends about half of all inter-node
        # edges across locations at 8 * D / tr_l ~ 1.2 s mean per transfer
        # (100..500 KB at 2 Mbps), which exceeds the 0.55 s/node of local
        # execution it displaces (0.1..1 Gcycles at 1 GHz). Measured over
        # max_out 1..3, alpha 0.5..4.0, beta 0.1..2.0: rr < local fails at
        # n=10 for every shape (closest: rr 5.795 s vs local 5.682 s at
        # max_out=1, alpha=2.0) and at every n for any max_out >= 2. The
        # transfer rates and payload ranges are fixed contract values, so
        # the test states the guarantee honestly and reports the measured
        # orderings rather than weakening the bound.
        t0 = time.perf_counter()
        cfg = ExperimentConfig(
            scenario="single",
            n=(10, 15, 20, 25, 30, 35, 40, 45, 50),
            k=(1,), m=(1,), instances=50,
            schedulers=("local", "rr", "heft"),
            seed=505,
        )
        rows = run_grid(cfg)
        elapsed = time.perf_counter() - t0
        cells: dict[int, dict[str, float]] = {}
        for r in rows:
            cells.setdefault(r["n"], {})[r["scheduler"]] = r["mean_aft_s"]
        bad = []
        for n in sorted(cells):
            c = cells[n]
            if not c["heft"] < c["rr"] < c["local"]:
                bad.append(
                    f"n={n}: heft={c['heft']:.3f} rr={c['rr']:.3f} "
                    f"local={c['local']:.3f}")
        ok = not bad and elapsed < 300.0
        line = report(ok, "heuristic ordering",
                      f"9 sizes x 50 instances, ordering violated at "
                      f"{len(bad)}/9 sizes, {elapsed:.1f} s")
        assert elapsed < 300.0, line
        assert not bad, line + "\n" + "\n".join(bad)

    def test_more_servers_never_hurt_exact_planner(self):
        # 30 instances of <= 8 exec nodes: the exact planner's mean AFT must
        # be non-increasing as servers are added, M in {1, 2, 3}. Adding a
        # server only widens the feasible plan set, so this holds exactly.
        sizes = [3, 4, 5, 6, 3, 4, 5, 6, 3, 4, 5, 6, 3, 4, 5, 6, 3, 4,
                 5, 6, 3, 4, 5, 6, 3, 4, 5, 6, 7, 8]
        violations = []
        t0 = time.perf_counter()
        for i, (n, seed) in enumerate(zip(sizes, seeds(606, 30))):
            alpha = 0.7 if n >= 7 else 1.0
            dag = generate_merged(GenConfig(node_num=n, alpha=alpha, seed=seed), K=1)
            prev = None
            for M in (1, 2, 3):
                platform = platform_53(M=M)
                plan = plan_optimal(dag, platform)
                val = evaluate_partial(dag, platform, plan).mean_aft
                if prev is not None and val > prev:
                    violations.append(
                        f"instance {i} (n={n}): M={M} got {val:.6f} > {prev:.6f}")
                prev = val
        elapsed = time.perf_counter() - t0
        ok = not violations
        line = report(ok, "server monotonicity",
                      f"30 instances, M in 1..3, {len(violations)} violations, "
                      f"{elapsed:.1f} s")
        assert ok, line + "; " + "; ".join(violations[:5])

    def test_bench_grid_byte_determinism(self):
        # Rerunning a grid with the same seed must reproduce the CSV byte
        # for byte, including the stochastic scheduler's averaged column.
        cfg = ExperimentConfig(
            scenario="multi", n=(5, 8), k=(1, 2), m=(2,),
            instances=5, random_reps=5,
            schedulers=("local", "remote", "rr", "random", "heft"),
            seed=707,
        )
        first = to_csv(run_grid(cfg))
        second = to_csv(run_grid(cfg))
        ok = first.encode() == second.encode()
        line = report(ok, "bench determinism",
                      f"{first.count(chr(10)) - 1} rows, byte-identical={ok}")
        assert ok, line
