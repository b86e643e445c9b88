"""Evaluation report: metrics CSV, comparison table and matplotlib figures."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import (  # noqa: E402
    ComparisonRow,
    MetricsSummary,
    compare,
    format_table,
    spatial_error,
    summaries_to_csv,
)
from .perception import PredictionRecord  # noqa: E402

log = logging.getLogger(__name__)

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    # stable bytes across runs
    "svg.hashsalt": "faultforge",
}


def comparisons(summaries: Dict[str, MetricsSummary], baseline_group: str) -> List[ComparisonRow]:
    base = summaries[baseline_group]
    return [compare(base, s) for g, s in summaries.items() if g != baseline_group]


def _save(fig, path: Path) -> Path:
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_group_errors(summaries: Sequence[MetricsSummary], path: Path, baseline_group: Optional[str] = None) -> Path:
    groups = [s.group for s in summaries]
    x = np.arange(len(groups))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(groups) + 2), 3.2))
        ax.bar(x - 0.2, [s.rmse for s in summaries], 0.4, label="RMSE", color="#c0392b")
        ax.bar(x + 0.2, [s.mae for s in summaries], 0.4, label="MAE", color="#2c7fb8")
        if baseline_group is not None:
            base = next(s for s in summaries if s.group == baseline_group)
            ax.axhline(base.rmse, color="k", lw=0.8, ls="--", label=f"{baseline_group} RMSE")
        ax.set_xticks(x, groups, rotation=60, ha="right")
        ax.set_ylabel("error (normalized)")
        ax.set_title("Regression error per group")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_group_accuracy(summaries: Sequence[MetricsSummary], path: Path) -> Path:
    groups = [s.group for s in summaries]
    x = np.arange(len(groups))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(groups) + 2), 3.2))
        ax.plot(x, [s.r2_overall for s in summaries], "o-", label="$R^2$ overall", color="#6a3d9a")
        ax.plot(x, [s.within_010 for s in summaries], "s-", label="within 0.10", color="#33a02c")
        ax.plot(x, [s.within_020 for s in summaries], "^-", label="within 0.20", color="#ff7f00")
        ax.set_ylim(0, 1.05)
        ax.set_xticks(x, groups, rotation=60, ha="right")
        ax.set_title("Fit and localization accuracy per group")
        ax.legend(frameon=False, ncol=3, loc="lower left")
        return _save(fig, path)


def plot_spatial_error(records: Sequence[PredictionRecord], path: Path, bins: int = 40) -> Path:
    errors = np.array([spatial_error(r) for r in records])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.hist(errors, bins=bins, color="#7f8c8d", edgecolor="white", linewidth=0.4)
        ax.axvline(0.10, color="#33a02c", ls="--", lw=1, label="0.10")
        ax.axvline(errors.mean(), color="#c0392b", lw=1.2, label=f"mean {errors.mean():.4f}")
        ax.set_xlabel("spatial error (normalized)")
        ax.set_ylabel("samples")
        ax.legend(frameon=False)
        return _save(fig, path)


def write_report(
    out_dir,
    records: Sequence[PredictionRecord],
    summaries: Dict[str, MetricsSummary],
    baseline_group: Optional[str],
    figures: bool = True,
) -> Dict[str, Path]:
    """Write ``metrics.csv``, ``comparison.txt`` and (optionally) PNG figures into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = list(summaries.values())
    rows = comparisons(summaries, baseline_group) if baseline_group else []
    paths = {"metrics": out / "metrics.csv", "table": out / "comparison.txt"}
    paths["metrics"].write_text(summaries_to_csv(ordered), encoding="utf-8")
    paths["table"].write_text(format_table(ordered, rows), encoding="utf-8")
    if figures:
        paths["errors_png"] = plot_group_errors(ordered, out / "group_errors.png", baseline_group)
        paths["accuracy_png"] = plot_group_accuracy(ordered, out / "group_accuracy.png")
        paths["spatial_png"] = plot_spatial_error(records, out / "spatial_error_hist.png")
    log.info("report written to %s", out)
    return paths
