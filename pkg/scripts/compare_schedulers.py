#!/usr/bin/env python3
"""Single-user single-edge scheduler comparison over task sizes.

Sweeps node_num across a range on the 1 UE / 1 ES platform (one ES
processor, 2 Mbps uplink) and prints the mean-AFT table plus ordering
checks. The exact planner is included only where the instance size
allows full enumeration.
"""

import argparse
from pathlib import Path

from dagsched import ExperimentConfig, run_grid, summarize, to_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[10, 15, 20, 25, 30, 35, 40, 45, 50])
    parser.add_argument("--instances", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-out", type=int, default=3)
    parser.add_argument("--alpha", type=float, default=1.0)
    parser.add_argument("--beta", type=float, default=0.5)
    parser.add_argument("--with-optimal", action="store_true",
                        help="add the exact planner (skipped above its limit)")
    parser.add_argument("--out", type=Path, help="also write the CSV here")
    args = parser.parse_args()

    schedulers = ["local", "remote", "rr", "random", "heft"]
    if args.with_optimal:
        schedulers.append("optimal")
    config = ExperimentConfig(
        scenario="single",
        n=tuple(args.sizes),
        k=(1,),
        m=(1,),
        instances=args.instances,
        schedulers=tuple(schedulers),
        seed=args.seed,
        max_out_degree=args.max_out,
        alpha=args.alpha,
        beta=args.beta,
    )
    rows = run_grid(config)
    if args.out:
        args.out.write_text(to_csv(rows))
        print(f"wrote {args.out}")
    print(summarize(rows), end="")


if __name__ == "__main__":
    main()
