"""SVG line charts of report metrics against n."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import AGGREGATE, RiskReport  # noqa: E402

# metrics worth charting, per scenario; anything else in the report is skipped
PLOTTED = {
    "mse_eb": ("mse_ratio",),
    "mse_fb": ("mse_ratio",),
    "variance_eb": ("variance_ratio",),
    "variance_fb": ("variance_ratio",),
    "contraction": ("mass_truth_", "mass_estimate_"),
    "abos": ("risk_ratio", "risk_fb", "risk_oracle", "oracle_formula"),
    "type1": ("t1_hat", "type1_bound"),
    "oracle_check": ("risk_oracle", "oracle_formula"),
}

matplotlib.rcParams["svg.hashsalt"] = "glshrink"
matplotlib.rcParams["svg.fonttype"] = "path"


def _wanted(scenario: str, metric: str) -> bool:
    return any(metric == m or (m.endswith("_") and metric.startswith(m)) for m in PLOTTED.get(scenario, ()))


def _series(report: RiskReport, scenario: str):
    """{(metric, setting label): {n: median value}}; replicate rows are reduced by their median."""
    acc = defaultdict(lambda: defaultdict(list))
    for r in report.rows:
        if r.scenario != scenario or not _wanted(scenario, r.metric):
            continue
        label = "" if r.p is None or r.p == 0 else "p=%g" % r.p
        if r.C is not None:
            label += " C=%.3g" % r.C
        acc[(r.metric, label.strip())][r.n].append(r.value)
    return {k: {n: float(np.median(v)) for n, v in sorted(d.items())} for k, d in sorted(acc.items())}


def plot_report(report: RiskReport, out_dir) -> list[Path]:
    """One SVG per scenario present in the report; returns the written paths."""
    if not report.rows:
        raise ValueError("report has no rows; nothing to plot")
    out_dir = Path(out_dir)
    scenarios = sorted({r.scenario for r in report.rows})
    figures = []
    for scenario in scenarios:
        series = _series(report, scenario)
        if series:
            figures.append((scenario, series))
    if not figures:
        raise ValueError("report has no plottable metrics")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for scenario, series in figures:
        fig, ax = plt.subplots(figsize=(6, 4))
        for (metric, label), pts in series.items():
            ns = list(pts)
            ax.plot(ns, [pts[n] for n in ns], marker="o", label=(metric + " " + label).strip())
        ax.set_xscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("median over replicates")
        ax.set_title(scenario)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / ("%s.svg" % scenario)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths
