#!/usr/bin/env python3
"""Multi-user multi-edge sweeps: AFT versus user count and server count.

Two grids on the 2-processors-per-ES platform: user count swept at a
fixed number of servers, then server count swept at a fixed number of
users. More servers never hurt the location-aware planners; the index
cyclers only benefit from the extra processors.
"""

import argparse
from pathlib import Path

from dagsched import ExperimentConfig, run_grid, summarize, to_csv


def sweep(args, k, m) -> list[dict]:
    config = ExperimentConfig(
        scenario="multi",
        n=(args.n,),
        k=k,
        m=m,
        instances=args.instances,
        schedulers=("local", "rr", "random", "heft"),
        seed=args.seed,
    )
    return run_grid(config)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10, help="exec nodes per user")
    parser.add_argument("--users", type=int, nargs="+", default=[2, 3, 4, 5])
    parser.add_argument("--servers", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--fixed-users", type=int, default=3)
    parser.add_argument("--fixed-servers", type=int, default=2)
    parser.add_argument("--instances", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, help="also write the combined CSV here")
    args = parser.parse_args()

    print(f"== users {args.users} at M={args.fixed_servers} ==")
    user_rows = sweep(args, tuple(args.users), (args.fixed_servers,))
    print(summarize(user_rows), end="")

    print(f"\n== servers {args.servers} at K={args.fixed_users} ==")
    server_rows = sweep(args, (args.fixed_users,), tuple(args.servers))
    print(summarize(server_rows), end="")

    if args.out:
        args.out.write_text(to_csv(user_rows + server_rows))
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
