"""``cable-bbo`` command line: collect, train, infer, ik, scatter, evaluate, suite, plot.

Exit codes: 0 success, 2 configuration or usage error, 3 failure inside a stage.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import dataset, experiment, ik, model, plots
from .config import ConfigError, ExperimentConfig, load_config, paper_scale
from .experiment import METHODS, StageError
from .imaging import read_pgm, write_pgm
from .optimizer import InferenceProblem, cable_space, pareto_front, run_gradient, run_motpe, run_tpe
from .sim import CableState, forward_kinematics

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _write(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _stage(name: str, fn, *args, **kwargs):
    """Run ``fn`` and tag any failure with the stage name."""
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except ConfigError:
        raise
    except dataset.ConfigurationError as exc:
        raise ConfigError(str(exc)) from exc
    except Exception as exc:  # noqa: BLE001 - converted to a tagged stage failure
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


def _floats(text: str, n: int) -> tuple[float, ...]:
    try:
        v = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}") from None
    if len(v) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}")
    return v


# -- stages ---------------------------------------------------------------------------------
def cmd_collect(args, cfg: ExperimentConfig) -> int:
    steps = args.steps if args.steps is not None else cfg.dataset_steps
    t0 = time.time()
    ds = _stage("collect", dataset.collect, steps, cfg.seed, cfg.sim, cfg.dims)
    _stage("collect", dataset.save, ds, args.out)
    _log(f"collected {len(ds)} records in {time.time() - t0:.1f}s -> {args.out}")
    return EXIT_OK


def _train(data_path: str, cfg: ExperimentConfig, out: str, history_path: str | None = None):
    ds = _stage("train", dataset.load, data_path)
    if ds.dims != cfg.dims:
        raise ConfigError(f"dataset dims {ds.dims} differ from configured {cfg.dims}")
    tr, va = dataset.split(ds, cfg.train_fraction, cfg.seed)
    train_cfg = replace(cfg.train, seed=cfg.seed)
    fm, hist = _stage("train", model.train, tr, va if len(va) else None, train_cfg, cfg.model_arch())
    _stage("train", model.save, fm, out)
    if history_path:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(hist[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(hist)
        _write(history_path, buf.getvalue())
    return fm, hist


def cmd_train(args, cfg: ExperimentConfig) -> int:
    if args.epochs is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    t0 = time.time()
    _, hist = _train(args.data, cfg, args.out, args.history)
    last = hist[-1]
    _log(f"trained {last['epoch']} epochs in {time.time() - t0:.1f}s; "
         f"train mse {last['train_mse']:.5f}" + (f", val mse {last['val_mse']:.5f}" if "val_mse" in last else ""))
    return EXIT_OK


def cmd_episode(args, cfg: ExperimentConfig) -> int:
    ep = _stage("episode", experiment.make_episode, args.index, cfg.seed, cfg.sim, cfg.dims, cfg.suite)
    os.makedirs(args.out_dir, exist_ok=True)
    state = ep.state_t.to_dict()
    state["target_joints_deg"] = ep.target_joints.tolist()
    _write(os.path.join(args.out_dir, "state.json"), json.dumps(state, indent=1) + "\n")
    write_pgm(os.path.join(args.out_dir, "image_t.pgm"), ep.image_t)
    write_pgm(os.path.join(args.out_dir, "target.pgm"), ep.target_image)
    _log(f"episode {args.index} written to {args.out_dir}")
    return EXIT_OK


def _load_problem(args, cfg: ExperimentConfig, m: int | None = None):
    fm = _stage("load", model.load, args.model)
    try:
        with open(args.state) as fh:
            raw = json.load(fh)
        state = CableState.from_dict(raw)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError("load", f"cannot read state {args.state}: {exc}") from exc
    target = _stage("load", read_pgm, args.target, (fm.arch.width, fm.arch.height))
    from .dataset import observe

    image_t = observe(state, cfg.sim, (fm.arch.width, fm.arch.height))
    noise_seed = int(np.random.default_rng([cfg.seed, 99]).integers(2**31))
    prob = _stage("load", InferenceProblem, fm, image_t, state.joints_deg, target, cfg.sim.arm.joint_limits_deg,
                  m or cfg.suite.mc_samples, noise_seed)
    return fm, state, raw, prob


RESULT_FIELDS = ["method", "trial", "mu1", "mu2", "mu3", "sigma", "g1"]


def _trials_csv(method: str, trials) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for t in trials:
        w.writerow([method, t.number, *(repr(float(v)) for v in t.params[:3]), repr(float(t.params[3])),
                    repr(float(t.values[0]))])
    return buf.getvalue()


def cmd_infer(args, cfg: ExperimentConfig) -> int:
    _, state, _, prob = _load_problem(args, cfg)
    trials = args.trials if args.trials is not None else cfg.suite.motpe_trials
    sc = cfg.suite
    if args.method in ("gradient", "gradient_dist"):
        kind = "mse" if args.method == "gradient" else "distance_image"
        res = _stage("optimize", run_gradient, prob, cfg.seed, kind, sc.gradient, sc.mu_range)
    elif args.method == "tpe":
        res = _stage("optimize", run_tpe, prob, trials, cfg.seed, cable_space(sc.mu_range, None), sc.tpe)
    else:
        res = _stage("optimize", run_motpe, prob, trials, cfg.seed, cable_space(sc.mu_range, sc.sigma_range),
                     sc.tpe, sc.sigma_window)
    _write(args.out, _trials_csv(args.method, res.history))
    if res.front is not None:
        stem = os.path.splitext(args.out)[0]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "mu1", "mu2", "mu3", "sigma", "g1"])
        for p in res.front:
            w.writerow([p.trial, *(repr(float(v)) for v in p.mu), repr(p.sigma), repr(p.g1)])
        _write(stem + ".pareto.csv", buf.getvalue())
        _write(stem + ".pareto.svg", plots.pareto_svg(res.history))
    print(json.dumps({"method": args.method, "joints_deg": [float(v) for v in res.joints_deg],
                      "sigma": float(res.sigma), "g1": prob.g1(res.joints_deg, res.sigma)}))
    return EXIT_OK


def cmd_ik(args, cfg: ExperimentConfig) -> int:
    try:
        q = ik.IKQuery(_floats(args.target, 2), args.delta, args.step)
        ik.joint_grid(cfg.sim.arm, args.step)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sols = _stage("ik", ik.ik_grid_search, q, cfg.sim.arm)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j1", "j2", "j3"])
    for s in sols:
        w.writerow([repr(float(v)) for v in s])
    _write(args.out, buf.getvalue())
    _log(f"{len(sols)} grid solutions within +/-{args.delta} mm of {q.target_point_mm}")
    return EXIT_OK


def cmd_scatter(args, cfg: ExperimentConfig) -> int:
    _, _, raw, prob = _load_problem(args, cfg)
    sc = cfg.suite
    pts = _stage("scatter", ik.solution_scatter, prob, args.method, args.restarts, cfg.seed,
                 args.trials if args.trials is not None else sc.tpe_trials, sc.gradient, sc.tpe, sc.mu_range)
    ik_sols = None
    if not args.no_ik and "target_joints_deg" in raw:
        point = forward_kinematics(cfg.sim.arm, raw["target_joints_deg"])
        ik_sols = ik.ik_grid_search(ik.IKQuery(tuple(point), args.delta, args.step), cfg.sim.arm)
    _write(args.out, ik.scatter_to_csv({args.method: pts}, ik_sols))
    _log(f"{args.method}: hull area {ik.hull_area(pts):.1f} deg^2, volume {ik.hull_volume(pts):.1f} deg^3, "
         f"{ik.count_clusters(pts)} clusters")
    return EXIT_OK


def cmd_evaluate(args, cfg: ExperimentConfig) -> int:
    try:
        with open(args.episodes) as fh:
            rows = experiment.rows_from_csv(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        raise StageError("evaluate", f"cannot read episodes {args.episodes}: {exc}") from exc
    if not rows:
        raise StageError("evaluate", "episode CSV has no rows")
    thresholds = {p: experiment.percentile_thresholds(rows, p, cfg.percentiles) for p in experiment.PAIRINGS}
    table = experiment.summary_table(rows, thresholds, cfg.bootstrap_resamples, cfg.seed)
    _write(args.out, experiment.table_to_csv(table))
    return EXIT_OK


def cmd_suite(args, cfg: ExperimentConfig) -> int:
    out_dir = args.out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    suite = cfg.suite
    if args.episodes is not None:
        suite = replace(suite, n_episodes=args.episodes)
    if args.methods:
        suite = replace(suite, methods=tuple(args.methods.split(",")))
        if any(m not in METHODS for m in suite.methods):
            raise ConfigError(f"unknown methods in {args.methods!r}; choose from {METHODS}")
    if args.trials is not None:
        suite = replace(suite, tpe_trials=args.trials, motpe_trials=args.trials)
    model_path = args.model
    if model_path is None:
        data_path = os.path.join(out_dir, "dataset.ds")
        _log(f"no --model given: collecting {cfg.dataset_steps} steps and training")
        ds = _stage("collect", dataset.collect, cfg.dataset_steps, cfg.seed, cfg.sim, cfg.dims)
        _stage("collect", dataset.save, ds, data_path)
        model_path = os.path.join(out_dir, "model.fm")
        _train(data_path, cfg, model_path, os.path.join(out_dir, "training.csv"))
    fm = _stage("load", model.load, model_path)
    t0 = time.time()

    def progress(i, rows):
        _log(f"episode {i + 1}/{suite.n_episodes} done ({time.time() - t0:.0f}s)")

    rows = experiment.run_episode_suite(fm, cfg.sim, cfg.seed, suite, progress=progress, workers=args.workers)
    _write(os.path.join(out_dir, "episodes.csv"), experiment.rows_to_csv(rows))
    thresholds = {p: experiment.percentile_thresholds(rows, p, cfg.percentiles) for p in experiment.PAIRINGS}
    table = experiment.summary_table(rows, thresholds, cfg.bootstrap_resamples, cfg.seed)
    _write(os.path.join(out_dir, "table.csv"), experiment.table_to_csv(table))
    for row in table:
        if row["pairing"] == "target_robot":
            _log(f"{row['method']:>14}: target/robot EMD {row['emd_mean']:.3f} +/- {row['emd_std']:.3f}")
    return EXIT_OK


def cmd_plot(args, cfg: ExperimentConfig) -> int:
    inputs = {}
    for key, path in (("result_csv", args.result), ("scatter_csv", args.scatter), ("episodes_csv", args.episodes)):
        if path is None:
            continue
        try:
            with open(path) as fh:
                inputs[key] = fh.read()
        except OSError as exc:
            raise StageError("plot", f"missing input {path}: {exc}") from exc
    if not inputs:
        raise StageError("plot", "give at least one of --result, --scatter, --episodes")
    paths = _stage("plot", plots.emit_plots, args.out_dir, **inputs)
    for p in paths:
        _log(f"wrote {p}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="global seed (overrides config and CABLE_BBO_SEED)")
    common.add_argument("--paper-scale", action="store_true", help="12000-step data, 1000 trials, 150 episodes")

    p = argparse.ArgumentParser(prog="cable-bbo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("collect", parents=[common], help="record random motions into a dataset file")
    s.add_argument("--steps", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_collect)

    s = sub.add_parser("train", parents=[common], help="fit the forward model")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int)
    s.add_argument("--history", help="per-epoch CSV of train/val MSE")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("episode", parents=[common], help="export an evaluation episode (state + images)")
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_episode)

    def problem_args(s):
        s.add_argument("--model", required=True)
        s.add_argument("--state", required=True, help="cable state JSON")
        s.add_argument("--target", required=True, help="target image (binary PGM)")
        s.add_argument("--trials", type=int)

    s = sub.add_parser("infer", parents=[common], help="optimise J_t+1 for one target image")
    problem_args(s)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("ik", parents=[common], help="grid-search approximate inverse kinematics")
    s.add_argument("--target", required=True, help="end-effector point X,Y in mm")
    s.add_argument("--delta", type=float, default=3.0)
    s.add_argument("--step", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ik)

    s = sub.add_parser("scatter", parents=[common], help="optimised joints from many restarts")
    problem_args(s)
    s.add_argument("--method", choices=("gradient", "gradient_dist", "tpe"), required=True)
    s.add_argument("--restarts", type=int, default=200)
    s.add_argument("--delta", type=float, default=3.0)
    s.add_argument("--step", type=float, default=1.0)
    s.add_argument("--no-ik", action="store_true", help="skip the IK reference set")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scatter)

    s = sub.add_parser("evaluate", parents=[common], help="summary table from an episode CSV")
    s.add_argument("--episodes", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("suite", parents=[common], help="run the evaluation episodes end to end")
    s.add_argument("--model", help="checkpoint; collected and trained into --out-dir when omitted")
    s.add_argument("--out-dir")
    s.add_argument("--episodes", type=int)
    s.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    s.add_argument("--trials", type=int, help="TPE and MOTPE trials per episode")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_suite)

    s = sub.add_parser("plot", parents=[common], help="SVG figures from result CSVs")
    s.add_argument("--result", help="infer result CSV (Pareto scatter)")
    s.add_argument("--scatter", help="scatter CSV (joint solutions)")
    s.add_argument("--episodes", help="episode CSV (EMD histograms)")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.paper_scale:
            cfg = paper_scale(cfg)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        return args.func(args, cfg)
    except ConfigError as exc:
        _log(f"configuration error: {exc}")
        return EXIT_CONFIG
    except StageError as exc:
        _log(f"stage failure {exc}")
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
