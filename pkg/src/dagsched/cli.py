"""Command line front end: gen, plan, serve, bench, replay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    load_dataset,
    load_experiment,
    load_platform,
    replay_agent,
    run_grid,
    save_dataset,
    save_plan,
    summarize,
    to_csv,
)
from .generator import GenConfig
from .model import MergedDag
from .schedulers import DEFAULT_OPTIMAL_LIMIT, SCHEDULERS, make_plan
from .server import serve_stdio, serve_tcp
from .timing import evaluate_partial


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagsched")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a task-graph dataset")
    p.add_argument("--n", type=int, required=True, help="nodes per user task")
    p.add_argument("--max-out", type=int, default=3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--k", type=int, default=1, help="users per instance")
    p.add_argument("--count", type=int, default=1, help="instances to emit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("plan", help="run one scheduler on one instance")
    p.add_argument("--scheduler", required=True, choices=sorted(SCHEDULERS))
    p.add_argument("--dag", required=True, metavar="FILE")
    p.add_argument("--platform", required=True, metavar="FILE")
    p.add_argument("--out", metavar="FILE", help="plan JSON; stdout if omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=DEFAULT_OPTIMAL_LIMIT)

    p = sub.add_parser("serve", help="serve scheduling episodes over ndjson")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--port", type=int, help="listen on TCP port")
    mode.add_argument("--stdio", action="store_true", help="serve stdin/stdout")
    p.add_argument("--dataset", required=True, metavar="DIR")
    p.add_argument("--platform", required=True, metavar="FILE")

    p = sub.add_parser("bench", help="run a scheduler comparison grid")
    p.add_argument("--config", required=True, metavar="FILE", help="TOML config")
    p.add_argument("--out", required=True, metavar="FILE", help="CSV path")
    p.add_argument("--summary", action="store_true", help="print report to stdout")

    p = sub.add_parser("replay", help="score a recorded action log")
    p.add_argument("--dataset", required=True, metavar="DIR")
    p.add_argument("--platform", required=True, metavar="FILE")
    p.add_argument("--transcript", required=True, metavar="FILE")
    p.add_argument("--out", metavar="FILE", help="report JSON; stdout if omitted")
    return parser


def _cmd_gen(args: argparse.Namespace) -> int:
    config = GenConfig(
        node_num=args.n,
        max_out_degree=args.max_out,
        alpha=args.alpha,
        beta=args.beta,
        seed=args.seed,
    )
    save_dataset(args.out, config, count=args.count, K=args.k)
    print(f"wrote {args.count} instance(s) to {args.out}")
    return 0


def _cmd_plan(args: argparse.Namespace) -> int:
    dag = MergedDag.from_json(Path(args.dag).read_text())
    platform = load_platform(args.platform)
    plan = make_plan(
        args.scheduler, dag, platform, seed=args.seed, limit=args.limit
    )
    result = evaluate_partial(dag, platform, plan)
    if args.out:
        save_plan(args.out, plan)
    else:
        print(json.dumps([{"node": n, "loc": l} for n, l in plan]))
    print(f"mean AFT: {result.mean_aft:.6f} s", file=sys.stderr)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    platform = load_platform(args.platform)
    if args.stdio:
        serve_stdio(dataset, platform)
        return 0
    server = serve_tcp(dataset, platform, port=args.port)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    config = load_experiment(args.config)
    rows = run_grid(config)
    Path(args.out).write_text(to_csv(rows))
    if args.summary:
        print(summarize(rows), end="")
    print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    platform = load_platform(args.platform)
    report = replay_agent(args.dataset, platform, args.transcript)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "plan": _cmd_plan,
    "serve": _cmd_serve,
    "bench": _cmd_bench,
    "replay": _cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
