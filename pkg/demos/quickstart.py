"""Small end-to-end run: collect, train, then solve one episode with every method.

    python3 demos/quickstart.py [--steps 600] [--epochs 15] [--trials 150]

A few minutes on one CPU. Numbers are noisier than the full suite's.
"""
import argparse

from cable_bbo import dataset, experiment, model
from cable_bbo.sim import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=600)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--trials", type=int, default=150)
    ap.add_argument("--episode", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sim = SimConfig()
    print(f"collecting {args.steps} random motions ...")
    ds = dataset.collect(args.steps, seed=args.seed, cfg=sim)
    train, val = dataset.split(ds, seed=args.seed)
    print(f"training on {len(train)} records, validating on {len(val)} ...")
    fm, history = model.train(train, val, model.TrainConfig(epochs=args.epochs, seed=args.seed))
    best = min(h["val_mse"] for h in history)
    print(f"best validation MSE {best:.4f}")

    cfg = experiment.SuiteConfig(tpe_trials=args.trials, motpe_trials=args.trials)
    ep = experiment.make_episode(args.episode, args.seed, sim)
    print(f"episode {ep.index}: the target was reached by joints {ep.target_joints.round(1)} deg")
    for row in experiment.evaluate_episode(ep, fm, sim, args.seed, cfg):
        print(f"  {row.method:>13}: J* = {row.joints.round(1)} sigma={row.sigma:.3f} "
              f"EMD target/robot = {row.emd_target_robot:.2f} px")


if __name__ == "__main__":
    main()
