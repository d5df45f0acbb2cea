"""MOTPE on one episode: trade reconstruction loss against noise scale.

    python3 demos/pareto_front.py MODEL.fm [--trials 300] [--out pareto.svg]

Prints the Pareto front and the point chosen for execution, and writes the
g1-versus-sigma scatter as SVG.
"""
import argparse

from cable_bbo import experiment, model, plots
from cable_bbo.optimizer import InferenceProblem, cable_space, run_motpe
from cable_bbo.sim import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model")
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--episode", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="pareto.svg")
    args = ap.parse_args()

    sim = SimConfig()
    fm = model.load(args.model)
    ep = experiment.make_episode(args.episode, args.seed, sim)
    prob = InferenceProblem(fm, ep.image_t, ep.state_t.joints_deg, ep.target_image, sim.arm.joint_limits_deg)
    res = run_motpe(prob, args.trials, args.seed, cable_space())
    print(f"{len(res.front)} non-dominated points out of {args.trials} trials:")
    for p in res.front:
        mark = "  <- executed" if p.sigma == res.sigma else ""
        print(f"  sigma={p.sigma:.4f}  g1={p.g1:8.3f}  mu={p.mu}{mark}")
    with open(args.out, "w") as fh:
        fh.write(plots.pareto_svg(res.history))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
