"""Many restarts on one instance: gradient descent lands in a few tight spots,
TPE spreads over a region, and grid-search IK shows the full solution family.

    python3 demos/solution_multiplicity.py MODEL.fm [--restarts 50] [--out-dir figs]
"""
import argparse
import os

from cable_bbo import experiment, ik, model, plots
from cable_bbo.optimizer import InferenceProblem
from cable_bbo.sim import SimConfig, forward_kinematics


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model")
    ap.add_argument("--restarts", type=int, default=50)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--episode", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="figs")
    args = ap.parse_args()

    sim = SimConfig()
    fm = model.load(args.model)
    ep = experiment.make_episode(args.episode, args.seed, sim)
    prob = InferenceProblem(fm, ep.image_t, ep.state_t.joints_deg, ep.target_image, sim.arm.joint_limits_deg, m=1)
    scatters = {
        "gradient": ik.solution_scatter(prob, "gradient", args.restarts, args.seed),
        "tpe": ik.solution_scatter(prob, "tpe", args.restarts, args.seed, tpe_trials=args.trials),
    }
    point = forward_kinematics(sim.arm, ep.target_joints)
    ik_sols = ik.ik_grid_search(ik.IKQuery(tuple(point)), sim.arm)
    print(f"target end-effector {point.round(1)} mm: {len(ik_sols)} grid IK solutions")
    for name, pts in scatters.items():
        print(f"  {name:>8}: hull area {ik.hull_area(pts):9.0f} deg^2, {ik.count_clusters(pts)} clusters")
    os.makedirs(args.out_dir, exist_ok=True)
    for axes, name in (((0, 1), "joints_12.svg"), ((1, 2), "joints_23.svg")):
        with open(os.path.join(args.out_dir, name), "w") as fh:
            fh.write(plots.joint_scatter_svg(scatters, ik_sols, axes))
    print(f"wrote {args.out_dir}/joints_12.svg and joints_23.svg")


if __name__ == "__main__":
    main()
