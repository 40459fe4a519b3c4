#!/usr/bin/env python3
"""Pretrain the graph-attention autoencoder on a generated DAG dataset.

Collects one initial observation per instance over the wire protocol, fits
standardisation stats, trains encoder+decoder, and writes a versioned
encoder archive for the PPO agent to embed observations with.
"""

import argparse

from dagrl import GatConfig, initial_observations, save_encoder_archive, train_autoencoder


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", required=True, help="dataset directory (dagsched gen output)")
    ap.add_argument("--platform", required=True, help="platform JSON file")
    ap.add_argument("--out", required=True, help="encoder archive output path")
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--heads", type=int, default=3)
    ap.add_argument("--layers", type=int, default=3)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log-every", type=int, default=10)
    args = ap.parse_args()

    graphs = initial_observations(args.dataset, args.platform)
    print(f"pretraining on {len(graphs)} graphs from {args.dataset}")
    config = GatConfig(hidden=args.hidden, heads=args.heads, layers=args.layers,
                       lr=args.lr, batch_size=args.batch, seed=args.seed)

    def log(epoch, entry):
        if (epoch + 1) % args.log_every == 0 or epoch == 0:
            print(f"epoch {epoch + 1:4d}  total {entry['total']:10.4f}  "
                  f"feature {entry['feature']:10.4f}  structure {entry['structure']:10.4f}")

    encoder, _, stats, history = train_autoencoder(
        [(f, a) for _, f, a in graphs], config, args.epochs, log_cb=log)
    save_encoder_archive(args.out, encoder, stats)
    print(f"initial {history[0]['total']:.4f} -> final {history[-1]['total']:.4f} "
          f"({history[-1]['total'] / history[0]['total']:.1%}); wrote {args.out}")


if __name__ == "__main__":
    main()
