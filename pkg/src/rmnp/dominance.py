"""Diagonal-dominance diagnostics of the momentum Gram matrix v v^T.

For each row, the ratio of the diagonal Gram entry to the mean absolute
off-diagonal entry of that row; ratios above 1 mean the row's own energy
dominates its cross-row interactions. Per-matrix aggregates (avg/min/max)
roll up into global aggregates across all matrix parameters of a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import matrix as mx

__all__ = [
    "DEFAULT_RATIO_CAP",
    "DominanceReport",
    "GlobalDominance",
    "RowRatios",
    "UndefinedMetricError",
    "aggregate",
    "dominance_report",
    "global_aggregate",
    "row_ratios",
    "row_ratios_streaming",
    "smooth",
]

# Clamp value replacing +inf ratios when building reports, so CSV stays finite.
DEFAULT_RATIO_CAP = 1e12


class UndefinedMetricError(ValueError):
    """The dominance ratio needs at least two rows."""


@dataclass(frozen=True)
class RowRatios:
    """Per-row dominance ratios; entries are >= 0 and may be +inf.

    A ratio of exactly 0 marks a zero (degenerate) row: both its diagonal
    Gram entry and its off-diagonal row are zero.
    """

    values: np.ndarray

    @property
    def degenerate_rows(self) -> np.ndarray:
        return self.values == 0.0


@dataclass(frozen=True)
class DominanceReport:
    """Aggregated ratios for one matrix parameter at one step."""

    step: int
    param_id: str
    r_avg: float
    r_min: float
    r_max: float
    clamped: bool = False
    degenerate: bool = False

    def __post_init__(self):
        if not self.r_min <= self.r_avg <= self.r_max:
            raise ValueError(
                f"require r_min <= r_avg <= r_max, got "
                f"({self.r_min}, {self.r_avg}, {self.r_max})"
            )


@dataclass(frozen=True)
class GlobalDominance:
    """Unweighted means of per-parameter aggregates at one step."""

    step: int
    rbar_avg: float
    rbar_min: float
    rbar_max: float


def _ratios_from_parts(diag: np.ndarray, off_sums: np.ndarray, m: int) -> np.ndarray:
    off_mean = off_sums / (m - 1)
    values = np.empty(m)
    pos = off_mean > 0.0
    values[pos] = diag[pos] / off_mean[pos]
    values[~pos] = np.where(diag[~pos] > 0.0, np.inf, 0.0)
    return values


def row_ratios(v: mx.Matrix) -> RowRatios:
    """Per-row ratio diag / mean(|off-diagonal|) of the explicit Gram matrix.

    Rows whose off-diagonal entries are all zero get +inf when the diagonal
    is positive, and 0 when the whole row is zero.
    """
    m = v.shape[0]
    if m < 2:
        raise UndefinedMetricError(f"dominance ratios need m >= 2 rows, got m={m}")
    g = mx.gram(v)
    diag = np.diag(g)
    off_sums = np.abs(g).sum(axis=1) - np.abs(diag)
    return RowRatios(_ratios_from_parts(diag, off_sums, m))


def row_ratios_streaming(v: mx.Matrix) -> RowRatios:
    """Same ratios accumulated from per-row products, never forming the Gram.

    Oracle path for cross-checking `row_ratios`; accumulation order differs.
    """
    m = v.shape[0]
    if m < 2:
        raise UndefinedMetricError(f"dominance ratios need m >= 2 rows, got m={m}")
    diag = np.empty(m)
    off_sums = np.empty(m)
    for i in range(m):
        prods = v @ v[i]
        diag[i] = prods[i]
        off_sums[i] = np.abs(prods).sum() - abs(prods[i])
    return RowRatios(_ratios_from_parts(diag, off_sums, m))


def aggregate(rr: RowRatios) -> tuple[float, float, float]:
    """(mean, min, max) of the row ratios; +inf entries propagate unclamped."""
    values = rr.values
    return float(values.mean()), float(values.min()), float(values.max())


def dominance_report(
    step: int, param_id: str, rr: RowRatios, cap: float = DEFAULT_RATIO_CAP
) -> DominanceReport:
    """Aggregate into a report, clamping +inf ratios to *cap* and flagging it."""
    values = rr.values
    clamped = bool(np.isinf(values).any())
    if clamped:
        values = np.minimum(values, cap)
    return DominanceReport(
        step=step,
        param_id=param_id,
        r_avg=float(values.mean()),
        r_min=float(values.min()),
        r_max=float(values.max()),
        clamped=clamped,
        degenerate=bool(rr.degenerate_rows.any()),
    )


def global_aggregate(reports: Sequence[DominanceReport]) -> GlobalDominance:
    """Unweighted means of r_avg/r_min/r_max over all parameters at one step."""
    if not reports:
        raise ValueError("global aggregate needs at least one report")
    steps = {r.step for r in reports}
    if len(steps) != 1:
        raise ValueError(f"reports span multiple steps: {sorted(steps)}")
    k = len(reports)
    return GlobalDominance(
        step=reports[0].step,
        rbar_avg=sum(r.r_avg for r in reports) / k,
        rbar_min=sum(r.r_min for r in reports) / k,
        rbar_max=sum(r.r_max for r in reports) / k,
    )


def smooth(series: Sequence[float], window: int) -> np.ndarray:
    """Trailing simple moving average; early entries average what exists."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    s = np.asarray(series, dtype=np.float64)
    sums = np.concatenate([[0.0], np.cumsum(s)])
    out = np.empty_like(s)
    for i in range(len(s)):
        lo = max(0, i - window + 1)
        out[i] = (sums[i + 1] - sums[lo]) / (i + 1 - lo)
    return out
