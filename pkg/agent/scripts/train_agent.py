#!/usr/bin/env python3
"""Train the PPO agent against a dagsched environment server.

Spawns ``dagsched serve --stdio`` on the training dataset, alternates
rollout collection and clipped-surrogate updates, and periodically plays
the held-out dataset greedily.  The best checkpoint (by held-out mean AFT)
and its replay transcript are written out; the transcript can be scored
independently with ``dagsched replay``.
"""

import argparse

from dagrl import (
    EnvClient,
    PpoConfig,
    greedy_episode,
    load_manifest,
    save_policy,
    train,
    write_transcript,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-dataset", required=True)
    ap.add_argument("--heldout-dataset", required=True)
    ap.add_argument("--platform", required=True)
    ap.add_argument("--encoder", required=True, help="encoder archive from pretrain_encoder.py")
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--out", required=True, help="policy checkpoint output path")
    ap.add_argument("--transcript", required=True, help="held-out greedy transcript (.jsonl)")
    ap.add_argument("--eval-every", type=int, default=5, help="updates between held-out evals")
    ap.add_argument("--rollout-steps", type=int, default=2048)
    ap.add_argument("--update-epochs", type=int, default=4)
    ap.add_argument("--lam", type=float, default=0.95, help="GAE lambda")
    ap.add_argument("--max-grad-norm", type=float, default=0.5)
    ap.add_argument("--lr", type=float, default=3e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fine-tune-encoder", action="store_true")
    ap.add_argument("--permute-nodes", action="store_true",
                    help="randomise node order per step during rollouts")
    ap.add_argument("--init-local-bias", type=float, default=0.0,
                    help="initial location-head bias toward the own device")
    args = ap.parse_args()

    config = PpoConfig(lr=args.lr, rollout_steps=args.rollout_steps,
                       update_epochs=args.update_epochs, seed=args.seed,
                       lam=args.lam, max_grad_norm=args.max_grad_norm,
                       freeze_encoder=not args.fine_tune_encoder,
                       permute_nodes=args.permute_nodes,
                       init_local_bias=args.init_local_bias)
    held_count = load_manifest(args.heldout_dataset)["count"]
    state = {"updates": 0, "best": None}

    with EnvClient.spawn(args.train_dataset, args.platform) as train_client, \
         EnvClient.spawn(args.heldout_dataset, args.platform) as held_client:

        def callback(policy, steps, stats):
            state["updates"] += 1
            print(f"[{steps:7d}] rollout mean AFT {stats['mean_final_aft']:.4f} "
                  f"(baseline {stats['mean_baseline_aft']:.4f}) "
                  f"entropy {stats['entropy']:.3f}")
            if state["updates"] % args.eval_every:
                return False
            episodes = [greedy_episode(held_client, policy, instance=i)
                        for i in range(held_count)]
            mean = sum(e["mean_aft"] for e in episodes) / len(episodes)
            print(f"[{steps:7d}] held-out greedy mean AFT {mean:.4f}")
            if state["best"] is None or mean < state["best"]:
                state["best"] = mean
                save_policy(args.out, policy)
                write_transcript(args.transcript, episodes)
                print(f"[{steps:7d}] new best; wrote {args.out} and {args.transcript}")
            return False

        policy, history = train(train_client, args.encoder, config,
                                total_steps=args.steps, callback=callback)
        if state["best"] is None:
            episodes = [greedy_episode(held_client, policy, instance=i)
                        for i in range(held_count)]
            save_policy(args.out, policy)
            write_transcript(args.transcript, episodes)
    print(f"done after {len(history)} updates; best held-out mean "
          f"{state['best'] if state['best'] is not None else float('nan'):.4f}")


if __name__ == "__main__":
    main()
