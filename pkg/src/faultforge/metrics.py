"""Regression and localization metrics for lane-center predictions."""

from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from dataclasses import astuple, dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import DegenerateVariance, EmptyGroup, LengthMismatch
from .image import DEFAULT_SIZE
from .perception import PredictionRecord

EPSILONS = (0.10, 0.20)
# beyond this many terms sums use math.fsum instead of pairwise summation
COMPENSATED_ABOVE = 10_000


def _sum(values: np.ndarray) -> float:
    if values.size > COMPENSATED_ABOVE:
        return math.fsum(values.tolist())
    return float(np.sum(values))


def spatial_error(record: PredictionRecord) -> float:
    """Euclidean distance between truth and prediction in normalized units."""
    return math.hypot(record.truth.x - record.prediction.x, record.truth.y - record.prediction.y)


def spatial_error_px(record: PredictionRecord, size: int = DEFAULT_SIZE) -> float:
    return spatial_error(record) * size


def r_squared(truths: Sequence[float], preds: Sequence[float]) -> float:
    """Coefficient of determination about the truth mean.

    Raises DegenerateVariance when the truths are constant and the fit is not
    perfect.
    """
    t = np.asarray(truths, dtype=np.float64)
    p = np.asarray(preds, dtype=np.float64)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.size} truths vs {p.size} predictions")
    if t.size < 2:
        raise ValueError("r_squared needs at least two samples")
    ss_res = _sum((t - p) ** 2)
    ss_tot = _sum((t - t.mean()) ** 2)
    if ss_tot == 0.0:
        if ss_res == 0.0:
            return 1.0
        raise DegenerateVariance("truth values have zero variance")
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class MetricsSummary:
    group: str
    n: int
    r2_overall: float
    r2_x: float
    r2_y: float
    mse: float
    rmse: float
    mae: float
    within_010: float
    within_020: float
    mean_spatial_error: float
    degenerate: bool = False

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]


def _r2_or_nan(truths, preds):
    try:
        return r_squared(truths, preds), False
    except DegenerateVariance:
        return float("nan"), True


def summarize_group(group: str, records: Sequence[PredictionRecord]) -> MetricsSummary:
    n = len(records)
    if n < 2:
        raise EmptyGroup(f"group {group!r} has {n} record(s); need at least 2")
    gx = np.array([r.truth.x for r in records])
    gy = np.array([r.truth.y for r in records])
    px = np.array([r.prediction.x for r in records])
    py = np.array([r.prediction.y for r in records])

    # overall numbers pool both coordinates into one 2n-length residual vector
    truths = np.concatenate([gx, gy])
    preds = np.concatenate([px, py])
    resid = truths - preds
    mse = _sum(resid * resid) / resid.size
    mae = _sum(np.abs(resid)) / resid.size

    r2_overall, d0 = _r2_or_nan(truths, preds)
    r2_x, d1 = _r2_or_nan(gx, px)
    r2_y, d2 = _r2_or_nan(gy, py)

    dist = np.hypot(gx - px, gy - py)
    return MetricsSummary(
        group=group,
        n=n,
        r2_overall=r2_overall,
        r2_x=r2_x,
        r2_y=r2_y,
        mse=mse,
        rmse=math.sqrt(mse),
        mae=mae,
        within_010=float(np.count_nonzero(dist <= EPSILONS[0])) / n,
        within_020=float(np.count_nonzero(dist <= EPSILONS[1])) / n,
        mean_spatial_error=_sum(dist) / n,
        degenerate=d0 or d1 or d2,
    )


def summarize(records: Iterable[PredictionRecord]) -> Dict[str, MetricsSummary]:
    """Per-group summaries, keyed and ordered by group name.

    A group whose truths have zero variance is kept with NaN R^2 values and
    ``degenerate=True`` rather than dropped.
    """
    groups: Dict[str, List[PredictionRecord]] = {}
    for r in records:
        groups.setdefault(r.group, []).append(r)
    if not groups:
        raise EmptyGroup("no records to summarize")
    return OrderedDict((g, summarize_group(g, groups[g])) for g in sorted(groups))


@dataclass(frozen=True)
class ComparisonRow:
    group: str
    baseline_r2: float
    fault_r2: float
    delta_r2_pct: Optional[float]
    baseline_rmse: float
    fault_rmse: float
    delta_rmse_pct: Optional[float]
    fault_within_010: float
    fault_within_020: float


def _relative_pct(base: float, value: float) -> Optional[float]:
    if base == 0.0 or math.isnan(base) or math.isnan(value):
        return None
    return 100.0 * (value - base) / base


def compare(baseline: MetricsSummary, fault: MetricsSummary) -> ComparisonRow:
    """Relative change of R^2 and RMSE against the baseline; ``None`` marks an undefined delta."""
    return ComparisonRow(
        group=fault.group,
        baseline_r2=baseline.r2_overall,
        fault_r2=fault.r2_overall,
        delta_r2_pct=_relative_pct(baseline.r2_overall, fault.r2_overall),
        baseline_rmse=baseline.rmse,
        fault_rmse=fault.rmse,
        delta_rmse_pct=_relative_pct(baseline.rmse, fault.rmse),
        fault_within_010=fault.within_010,
        fault_within_020=fault.within_020,
    )


# --- report emission ------------------------------------------------------------


def summaries_to_csv(summaries: Iterable[MetricsSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MetricsSummary.columns())
    for s in summaries:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in astuple(s)])
    return buf.getvalue()


def summaries_from_csv(text: str) -> List[MetricsSummary]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        out.append(
            MetricsSummary(
                group=row["group"],
                n=int(row["n"]),
                degenerate=row.get("degenerate", "False") == "True",
                **{k: float(row[k]) for k in MetricsSummary.columns() if k not in ("group", "n", "degenerate")},
            )
        )
    return out


def _fmt(value: Optional[float], spec: str, suffix: str = "") -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float) and math.isnan(value):
        return "n/a"
    return format(value, spec) + suffix


def format_table(summaries: Sequence[MetricsSummary], rows: Sequence[ComparisonRow] = ()) -> str:
    """Plain-text table with Table-1 style columns plus baseline deltas."""
    header = f"{'group':<28} {'n':>6} {'R2':>7} {'MSE':>8} {'RMSE':>7} {'MAE':>7} {'W0.10':>6} {'W0.20':>6} {'meanErr':>8}"
    lines = [header, "-" * len(header)]
    for s in summaries:
        lines.append(
            f"{s.group:<28} {s.n:>6} {_fmt(s.r2_overall, '.4f'):>7} {s.mse:>8.5f} {s.rmse:>7.4f} "
            f"{s.mae:>7.4f} {s.within_010:>6.3f} {s.within_020:>6.3f} {s.mean_spatial_error:>8.4f}"
        )
    if rows:
        lines.append("")
        sub = f"{'vs baseline':<28} {'R2':>7} {'dR2':>9} {'RMSE':>7} {'dRMSE':>9}"
        lines += [sub, "-" * len(sub)]
        for r in rows:
            lines.append(
                f"{r.group:<28} {_fmt(r.fault_r2, '.4f'):>7} {_fmt(r.delta_r2_pct, '+.1f', '%'):>9} "
                f"{r.fault_rmse:>7.4f} {_fmt(r.delta_rmse_pct, '+.1f', '%'):>9}"
            )
    return "\n".join(lines) + "\n"
