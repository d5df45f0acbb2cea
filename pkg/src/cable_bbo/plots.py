"""Minimal SVG figures: Pareto scatter, joint-solution scatter, EMD histograms.

Everything is rendered to strings first and written only if every figure
succeeded, so a bad input never leaves a partial set of files behind.
"""
from __future__ import annotations

import csv
import io
import os
from xml.sax.saxutils import escape

import numpy as np

from .optimizer import Trial, pareto_front

W, H = 480, 360
MARGIN = 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f")


class PlotInputError(ValueError):
    pass


def _scale(values, lo_px, hi_px):
    v = np.asarray(values, dtype=float)
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lambda x: lo_px + (np.asarray(x, dtype=float) - lo) / (hi - lo) * (hi_px - lo_px), (lo, hi)


def _frame(title: str, xlabel: str, ylabel: str, xr, yr, body: list[str]) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - 10}" y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{MARGIN}" y2="30" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{MARGIN}" y="{H - MARGIN + 14}" font-size="10">{xr[0]:.4g}</text>',
        f'<text x="{W - 10}" y="{H - MARGIN + 14}" text-anchor="end" font-size="10">{xr[1]:.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{H - MARGIN}" text-anchor="end" font-size="10">{yr[0]:.4g}</text>',
        f'<text x="{MARGIN - 4}" y="36" text-anchor="end" font-size="10">{yr[1]:.4g}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def pareto_svg(trials: list[Trial]) -> str:
    """g1 against sigma for every trial; Pareto-front points carry ``class="front"``."""
    if not trials:
        raise PlotInputError("no trials to plot")
    sig = np.array([t.params[3] for t in trials])
    g1 = np.array([t.values[0] for t in trials])
    front = {p.trial for p in pareto_front(trials)}
    sx, xr = _scale(sig, MARGIN, W - 10)
    sy, yr = _scale(g1, H - MARGIN, 30)
    body = []
    for t, s, g in zip(trials, sig, g1):
        cls, fill, r = ("front", "#d62728", 4) if t.number in front else ("trial", "#9bb7d4", 2.5)
        body.append(f'<circle class="{cls}" data-trial="{t.number}" cx="{float(sx(s)):.2f}" '
                    f'cy="{float(sy(g)):.2f}" r="{r}" fill="{fill}"/>')
    pts = sorted((p.sigma, p.g1) for p in pareto_front(trials))
    path = " ".join(f"{float(sx(s)):.2f},{float(sy(g)):.2f}" for s, g in pts)
    body.append(f'<polyline class="front-line" points="{path}" fill="none" stroke="#d62728"/>')
    return _frame("Pareto solutions", "sigma", "g1", xr, yr, body)


def joint_scatter_svg(scatters: dict[str, np.ndarray], ik: np.ndarray | None = None, axes=(0, 1)) -> str:
    """Optimised joint vectors projected on two joints, with approximate IK solutions behind them."""
    groups = {k: np.asarray(v, dtype=float).reshape(-1, 3) for k, v in scatters.items()}
    if not groups or all(len(v) == 0 for v in groups.values()):
        raise PlotInputError("no joint solutions to plot")
    everything = [v for v in groups.values() if len(v)]
    if ik is not None and len(ik):
        everything.append(np.asarray(ik, dtype=float))
    allpts = np.vstack(everything)
    a, b = axes
    sx, xr = _scale(allpts[:, a], MARGIN, W - 10)
    sy, yr = _scale(allpts[:, b], H - MARGIN, 30)
    body = []
    if ik is not None:
        for p in np.asarray(ik, dtype=float):
            body.append(f'<circle class="ik" cx="{float(sx(p[a])):.2f}" cy="{float(sy(p[b])):.2f}" r="1" '
                        f'fill="#cccccc"/>')
    for k, (name, pts) in enumerate(groups.items()):
        color = PALETTE[k % len(PALETTE)]
        body.append(f'<text x="{W - 80}" y="{40 + 14 * k}" font-size="11" fill="{color}">{escape(name)}</text>')
        for p in pts:
            body.append(f'<circle class="solution" data-source="{escape(name)}" cx="{float(sx(p[a])):.2f}" '
                        f'cy="{float(sy(p[b])):.2f}" r="2.5" fill="{color}"/>')
    return _frame("Joint solutions", f"joint {a + 1} [deg]", f"joint {b + 1} [deg]", xr, yr, body)


def histogram_svg(samples: dict[str, np.ndarray], title: str, bins: int = 20) -> str:
    """Overlaid outline histograms sharing one set of bins."""
    groups = {k: np.asarray(v, dtype=float) for k, v in samples.items() if len(v)}
    if not groups:
        raise PlotInputError("no values for histogram")
    edges = np.histogram_bin_edges(np.concatenate(list(groups.values())), bins=bins)
    counts = {k: np.histogram(v, bins=edges)[0] for k, v in groups.items()}
    top = max(int(c.max()) for c in counts.values())
    sx, xr = _scale(edges, MARGIN, W - 10)
    sy, yr = _scale([0, max(top, 1)], H - MARGIN, 30)
    body = []
    for k, (name, c) in enumerate(counts.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = [f"{float(sx(edges[0])):.2f},{float(sy(0)):.2f}"]
        for i, n in enumerate(c):
            pts += [f"{float(sx(edges[i])):.2f},{float(sy(n)):.2f}", f"{float(sx(edges[i + 1])):.2f},{float(sy(n)):.2f}"]
        pts.append(f"{float(sx(edges[-1])):.2f},{float(sy(0)):.2f}")
        body.append(f'<polyline class="hist" data-method="{escape(name)}" points="{" ".join(pts)}" '
                    f'fill="none" stroke="{color}"/>')
        body.append(f'<text x="{W - 100}" y="{40 + 14 * k}" font-size="11" fill="{color}">{escape(name)}</text>')
    return _frame(title, "EMD [px]", "count", xr, yr, body)


# -- CSV readers -------------------------------------------------------------
def trials_from_csv(text: str) -> list[Trial]:
    """Inference result CSV (method, trial, mu1..mu3, sigma, g1) back into trials."""
    reader = csv.DictReader(io.StringIO(text))
    need = {"trial", "mu1", "mu2", "mu3", "sigma", "g1"}
    if not need <= set(reader.fieldnames or []):
        raise PlotInputError(f"result CSV needs columns {sorted(need)}")
    out = []
    for d in reader:
        sigma = float(d["sigma"])
        out.append(Trial(int(d["trial"]), np.array([float(d["mu1"]), float(d["mu2"]), float(d["mu3"]), sigma]),
                         (float(d["g1"]), -sigma)))
    return out


def scatter_from_csv(text: str) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
    reader = csv.DictReader(io.StringIO(text))
    if not {"source", "j1", "j2", "j3"} <= set(reader.fieldnames or []):
        raise PlotInputError("scatter CSV needs columns source, j1, j2, j3")
    groups: dict[str, list] = {}
    for d in reader:
        groups.setdefault(d["source"], []).append([float(d["j1"]), float(d["j2"]), float(d["j3"])])
    ik = np.array(groups.pop("ik")) if "ik" in groups else None
    return {k: np.array(v) for k, v in groups.items()}, ik


def render_all(result_csv: str | None = None, scatter_csv: str | None = None,
               episodes_csv: str | None = None) -> dict[str, str]:
    """File name -> SVG text for every input given. Raises before anything is written."""
    from .experiment import PAIRINGS, costs_by, rows_from_csv

    figures: dict[str, str] = {}
    if result_csv is not None:
        trials = [t for t in trials_from_csv(result_csv)]
        figures["pareto.svg"] = pareto_svg(trials)
    if scatter_csv is not None:
        groups, ik = scatter_from_csv(scatter_csv)
        figures["joints_12.svg"] = joint_scatter_svg(groups, ik, (0, 1))
        figures["joints_23.svg"] = joint_scatter_svg(groups, ik, (1, 2))
    if episodes_csv is not None:
        rows = rows_from_csv(episodes_csv)
        if not rows:
            raise PlotInputError("episode CSV has no rows")
        for pairing in PAIRINGS:
            figures[f"emd_{pairing}.svg"] = histogram_svg(costs_by(rows, pairing), f"EMD {pairing.replace('_', '/')}")
    if not figures:
        raise PlotInputError("nothing to plot")
    return figures


def emit_plots(out_dir: str | os.PathLike, **inputs) -> list[str]:
    figures = render_all(**inputs)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, svg in figures.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(svg)
        paths.append(path)
    return paths
