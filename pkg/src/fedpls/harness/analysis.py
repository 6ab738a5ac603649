"""Learning-curve smoothing, convergence detection and seed-set comparisons."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import ContractViolation


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over ``min(window, i + 1)`` points."""
    if window < 1:
        raise ContractViolation("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if window == 1 or x.size == 0:
        return x.copy()
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def _tail_count(n: int, fraction: float) -> int:
    return max(1, int(n * fraction))


def final_window_mean(series, fraction: float = 0.1) -> float:
    """Mean of the last ``fraction`` of a series (at least one point)."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ContractViolation("empty series")
    return float(x[-_tail_count(x.size, fraction):].mean())


def convergence_episode(series, fraction: float = 0.9, tail_fraction: float = 0.1) -> int:
    """First index whose value reaches ``fraction`` of the tail mean and after
    which the series never drops below 90% of that threshold.

    Returns ``len(series)`` when no such index exists.
    """
    if not 0.0 < fraction <= 1.0:
        raise ContractViolation("fraction must lie in (0, 1]")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ContractViolation("empty series")
    threshold = fraction * final_window_mean(x, tail_fraction)
    floor = 0.9 * threshold
    # suffix minimum tells whether anything later dips under the floor
    suffix_min = np.minimum.accumulate(x[::-1])[::-1]
    later_min = np.concatenate([suffix_min[1:], [np.inf]])
    ok = (x >= threshold) & (later_min >= floor)
    hits = np.flatnonzero(ok)
    return int(hits[0]) if hits.size else int(x.size)


@dataclass(frozen=True)
class TrendReport:
    metric: str
    mean_a: float
    mean_b: float
    sd_a: float
    sd_b: float
    pooled_sd: float
    direction: str  # "A > B", "B > A" or "indistinguishable"
    n_a: int
    n_b: int

    def __str__(self) -> str:
        return (
            f"{self.metric}: A {self.mean_a:.4f} +/- {self.sd_a:.4f} (n={self.n_a}), "
            f"B {self.mean_b:.4f} +/- {self.sd_b:.4f} (n={self.n_b}); pooled sd {self.pooled_sd:.4f} -> {self.direction}"
        )


def read_metrics(path, kind: str = "episode") -> dict[str, np.ndarray]:
    """Numeric columns of the ``kind`` rows of a metrics CSV."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["kind"] == kind]
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0] if k != "kind"}


def _series_of(run, metric: str) -> np.ndarray:
    if isinstance(run, (str, Path)):
        run = read_metrics(run)
    if hasattr(run, "series") and hasattr(run, "episodes"):
        try:
            return run.series(metric)
        except AttributeError as exc:
            raise ContractViolation(f"run has no metric {metric!r}") from exc
    if isinstance(run, Mapping):
        if metric not in run:
            raise ContractViolation(f"run has no metric {metric!r}; available: {sorted(run)}")
        return np.asarray(run[metric], dtype=float)
    return np.asarray(run, dtype=float)


def compare_trends(
    runs_a: Sequence,
    runs_b: Sequence,
    metric: str = "network_secrecy_sum",
    final_fraction: float = 0.1,
) -> TrendReport:
    """Compare the final-window means of two seed sets.

    Each run may be a metrics CSV path, a column mapping, an
    ``ExperimentResult`` or a bare series. A set wins when its mean exceeds
    the other's by more than the pooled standard deviation.
    """
    if len(runs_a) < 3 or len(runs_b) < 3:
        raise ContractViolation("each run set needs at least 3 seeds")
    finals_a = np.array([final_window_mean(_series_of(r, metric), final_fraction) for r in runs_a])
    finals_b = np.array([final_window_mean(_series_of(r, metric), final_fraction) for r in runs_b])
    sd_a, sd_b = float(finals_a.std(ddof=1)), float(finals_b.std(ddof=1))
    pooled = float(np.sqrt((sd_a ** 2 + sd_b ** 2) / 2.0))
    diff = float(finals_a.mean() - finals_b.mean())
    if diff > pooled and diff > 0:
        direction = "A > B"
    elif -diff > pooled and diff < 0:
        direction = "B > A"
    else:
        direction = "indistinguishable"
    return TrendReport(metric, float(finals_a.mean()), float(finals_b.mean()), sd_a, sd_b, pooled, direction, len(finals_a), len(finals_b))
