"""Structural cost model: linear baseline plus a spill-amplification residual.

Wall time of the row path is modeled as slope * n + intercept on the
zero-spill measurements; every spilling measurement's excess over that
line is its alpha residual. The tensor path never spills, so its fit is
the bare line and the residual curve stays empty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientData
from .selector import Path


@dataclass(frozen=True)
class Measurement:
    """Repeated wall-time samples for one (n, budget, path) cell."""

    n: int
    m: int
    path: Path
    wall_times: tuple[float, ...]
    temp_blocks: int

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.wall_times)
        object.__setattr__(self, "wall_times", times)
        if not times:
            raise ValueError("wall_times must be non-empty")
        if any(t <= 0 for t in times):
            raise ValueError("wall_times must be positive")

    @property
    def median(self) -> float:
        return float(np.median(self.wall_times))


@dataclass(frozen=True)
class RegimeFit:
    """Fitted linear coefficient plus the residual curve of spilling points.

    alpha_curve holds (n, alpha_seconds) pairs sorted by n and is empty
    when nothing spilled; spill_threshold_rows is the smallest measured n
    with temp_blocks > 0 (None without spilling). residual_std is the
    standard deviation of the linear fit's residuals on the zero-spill
    subset; alpha points are validated to sit above -2 * residual_std.
    """

    linear_coeff: float
    intercept: float
    spill_threshold_rows: Optional[int]
    alpha_curve: tuple[tuple[int, float], ...]
    residual_std: float

    def __post_init__(self) -> None:
        ns = [n for n, _ in self.alpha_curve]
        if ns != sorted(ns) or len(set(ns)) != len(ns):
            raise ValueError("alpha_curve must be sorted by n without duplicates")
        floor = -2.0 * self.residual_std - 1e-12
        for n, a in self.alpha_curve:
            if a < floor:
                raise ValueError(
                    f"alpha({n}) = {a} below the noise floor {floor}; the"
                    " linear baseline does not describe the zero-spill regime"
                )


def _aggregate_by_n(ms: Sequence[Measurement]) -> tuple[np.ndarray, np.ndarray]:
    """Median-of-medians per distinct n, sorted by n."""
    by_n: dict[int, list[float]] = {}
    for m in ms:
        by_n.setdefault(m.n, []).append(m.median)
    ns = np.array(sorted(by_n), dtype=np.float64)
    ts = np.array([float(np.median(by_n[int(n)])) for n in ns])
    return ns, ts


def fit_regime(measurements: Sequence[Measurement]) -> RegimeFit:
    """Least-squares line on zero-spill points, residual alphas elsewhere.

    Requires at least three zero-spill measurement points (distinct n);
    all measurements must share one budget and one path.
    """
    ms = list(measurements)
    if not ms:
        raise InsufficientData("no measurements")
    if len({m.m for m in ms}) != 1 or len({m.path for m in ms}) != 1:
        raise ValueError("fit_regime expects measurements for one (path, budget)")
    clean = [m for m in ms if m.temp_blocks == 0]
    spilling = [m for m in ms if m.temp_blocks > 0]
    if len({m.n for m in clean}) < 3:
        raise InsufficientData(
            f"need >= 3 zero-spill points, got {len({m.n for m in clean})}"
        )
    ns, ts = _aggregate_by_n(clean)
    slope, intercept = np.polyfit(ns, ts, 1)
    residual_std = float(np.std(ts - (slope * ns + intercept)))
    threshold: Optional[int] = None
    alpha: tuple[tuple[int, float], ...] = ()
    if spilling:
        sns, sts = _aggregate_by_n(spilling)
        threshold = int(sns[0])
        alpha = tuple(
            (int(n), float(t - (slope * n + intercept))) for n, t in zip(sns, sts)
        )
    return RegimeFit(float(slope), float(intercept), threshold, alpha, residual_std)


def predict(fit: RegimeFit, n: int) -> float:
    """Model time at n: the line plus the interpolated alpha residual.

    Below the first alpha point the prediction is purely linear; beyond
    the last point the final segment's slope extrapolates (flat when the
    curve has a single point).
    """
    base = fit.linear_coeff * n + fit.intercept
    if not fit.alpha_curve or n < fit.alpha_curve[0][0]:
        return float(base)
    ns = np.array([p[0] for p in fit.alpha_curve], dtype=np.float64)
    alphas = np.array([p[1] for p in fit.alpha_curve])
    if n <= ns[-1]:
        return float(base + np.interp(n, ns, alphas))
    if len(ns) == 1:
        return float(base + alphas[-1])
    tail_slope = (alphas[-1] - alphas[-2]) / (ns[-1] - ns[-2])
    return float(base + alphas[-1] + tail_slope * (n - ns[-1]))


def dispersion(measurement: Measurement) -> float:
    """P99 / P50 of the measurement's wall times (nearest-rank)."""
    from .bench import percentile

    if len(measurement.wall_times) < 20:
        raise InsufficientData(
            f"dispersion needs >= 20 samples, got {len(measurement.wall_times)}"
        )
    return percentile(measurement.wall_times, 99) / percentile(
        measurement.wall_times, 50
    )
