"""Uniform-in-bandwidth diagnostics.

Builds bandwidth grids between c*log(n)/n (or c*(log n/n)^gamma) and 2*h0,
measures sup-norm deviations of an estimator over an equispaced x-grid on
I, and normalizes them into rate statistics
sqrt(nh) * deviation / sqrt(max(|log h|, log log n)).
"""

from __future__ import annotations

import logging
import math
import threading
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from locpoly.errors import (
    ArgumentError,
    DegenerateScanError,
    EmptyWindowError,
    SingularDesignError,
)
from locpoly.estimators import ftilde_value, kde, local_poly_fit, rtilde_value
from locpoly.kernels import (
    Kernel,
    convolve_on_grid,
    evaluate_on,
    kernel_moment,
    transformed,
)
from locpoly.models import (
    BandwidthGrid,
    Centering,
    Deviation,
    GridKind,
    PairedSample,
    RateReport,
    RateRow,
    ScanTarget,
    TargetKind,
)
from locpoly.workers import map_ordered

logger = logging.getLogger(__name__)

DEFAULT_XGRID_POINTS = 401
MIN_SAMPLE_SIZE = 16

CenterSource = Union[np.ndarray, list[float], Callable[[float], float]]
CenterProvider = Callable[[float, np.ndarray], np.ndarray]


class TruthModel(BaseModel):
    """Known design density f_X and, for regression targets, g."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    density: Callable
    regression: Optional[Callable] = None

    def numerator(self) -> Callable[[np.ndarray], np.ndarray]:
        """phi(x) = g(x) f_X(x), the integral of y f(x, y) dy for zero-mean noise."""
        if self.regression is None:
            raise ArgumentError("the truth model has no regression function")
        density, regression = self.density, self.regression

        def phi(x: np.ndarray) -> np.ndarray:
            return evaluate_on(regression, x) * evaluate_on(density, x)

        return phi


# ---------------------------------------------------------------------- #
# Grids
# ---------------------------------------------------------------------- #


def interval_grid(interval: tuple[float, float], points: int = DEFAULT_XGRID_POINTS) -> np.ndarray:
    """Equispaced grid of *points* values covering the closed interval."""
    if points < 1:
        raise ArgumentError("an x-grid needs at least one point")
    lo, hi = interval
    return np.linspace(lo, hi, points)


def _doubling(start: float, upper: float) -> list[float]:
    hs: list[float] = []
    h = start
    while h <= upper:
        hs.append(h)
        h *= 2.0
    return hs


def _check_grid_args(c: float, n: int, h0: float) -> None:
    if not c > 0:
        raise ArgumentError(f"c must be positive, got {c}")
    if n < 3:
        raise ArgumentError(f"n must be at least 3, got {n}")
    if not 0 < h0 < 1:
        raise ArgumentError(f"h0 must lie in (0, 1), got {h0}")


def dyadic_grid(c: float, n: int, h0: float) -> BandwidthGrid:
    """h_{j,n} = 2^j c log(n)/n for j = 0..l_n, with h_{l_n,n} <= 2 h0."""
    _check_grid_args(c, n, h0)
    start = c * math.log(n) / n
    if start >= 2 * h0:
        raise ArgumentError(f"c log n/n = {start:.4g} leaves no bandwidth below 2*h0 = {2 * h0:g}")
    return BandwidthGrid(c=c, n=n, h0=h0, hs=_doubling(start, 2 * h0), kind=GridKind.DYADIC)


def power_law_grid(c: float, n: int, h0: float, gamma: float) -> BandwidthGrid:
    """Doubling grid starting at c (log n/n)^gamma, up to 2 h0."""
    _check_grid_args(c, n, h0)
    if not gamma > 0:
        raise ArgumentError(f"gamma must be positive, got {gamma}")
    start = c * (math.log(n) / n) ** gamma
    if start >= 2 * h0:
        raise ArgumentError(f"c (log n/n)^gamma = {start:.4g} leaves no bandwidth below 2*h0")
    return BandwidthGrid(
        c=c, n=n, h0=h0, hs=_doubling(start, 2 * h0), kind=GridKind.POWER_LAW, gamma=gamma
    )


def explicit_grid(hs: list[float], n: int) -> BandwidthGrid:
    """A user-supplied ascending grid of bandwidths in (0, 1)."""
    if not hs or any(not 0 < h < 1 for h in hs):
        raise ArgumentError("explicit bandwidths must lie in (0, 1)")
    return BandwidthGrid(
        c=1.0, n=n, h0=max(hs), hs=sorted(float(h) for h in hs), kind=GridKind.EXPLICIT
    )


def grid_length(c: float, n: int, h0: float) -> float:
    """The asymptotic count log(n h0/(c log n))/log 2 that l_n follows."""
    return math.log(n * h0 / (c * math.log(n))) / math.log(2.0)


def shrinking_upper(n: int, scale: float, exponent: float) -> float:
    """b_n = scale * n^(-exponent)."""
    return scale * n ** (-exponent)


# ---------------------------------------------------------------------- #
# Centers and deviations
# ---------------------------------------------------------------------- #


def target_centers(
    target: ScanTarget,
    centering: Centering,
    kernel: Kernel,
    h: float,
    xgrid: np.ndarray,
    model: TruthModel,
) -> np.ndarray:
    """The function an estimator is compared with at bandwidth h."""
    xgrid = np.asarray(xgrid, dtype=float)
    tk = transformed(kernel, target.order if target.kind is not TargetKind.KDE else 0)

    if centering is Centering.EXPECTATION:
        if target.kind is TargetKind.REGRESSION:
            raise ArgumentError("regression targets are centered at the true function")
        if target.kind is TargetKind.RTILDE:
            return convolve_on_grid(model.numerator(), tk, h, xgrid)
        return convolve_on_grid(model.density, tk, h, xgrid)

    if target.kind is TargetKind.KDE:
        return evaluate_on(model.density, xgrid)
    if target.kind is TargetKind.FTILDE:
        return kernel_moment(kernel, target.order) * evaluate_on(model.density, xgrid)
    if target.kind is TargetKind.RTILDE:
        return kernel_moment(kernel, target.order) * model.numerator()(xgrid)
    if model.regression is None:
        raise ArgumentError("true-function centering of a regression target needs g")
    return evaluate_on(model.regression, xgrid)


class CenterCache:
    """Memoizes target centers by bandwidth.

    Centers depend on the model, target, kernel and x-grid only, so one
    cache serves every replicate that shares them.
    """

    def __init__(
        self,
        target: ScanTarget,
        centering: Centering,
        kernel: Kernel,
        model: TruthModel,
    ) -> None:
        self.target = target
        self.centering = centering
        self.kernel = kernel
        self.model = model
        self._values: dict[tuple[float, bytes], np.ndarray] = {}
        self._lock = threading.Lock()

    def __call__(self, h: float, xgrid: np.ndarray) -> np.ndarray:
        key = (h, np.ascontiguousarray(xgrid, dtype=float).tobytes())
        with self._lock:
            cached = self._values.get(key)
        if cached is None:
            cached = target_centers(
                self.target, self.centering, self.kernel, h, xgrid, self.model
            )
            with self._lock:
                self._values[key] = cached
        return cached


def _estimate(
    sample: PairedSample, kernel: Kernel, h: float, target: ScanTarget, x0: float
) -> float:
    if target.kind is TargetKind.KDE:
        return float(kde(sample, kernel, h, x0))
    if target.kind is TargetKind.FTILDE:
        return ftilde_value(sample, kernel, h, x0, target.order)
    if target.kind is TargetKind.RTILDE:
        return rtilde_value(sample, kernel, h, x0, target.order)
    return local_poly_fit(sample, kernel, h, x0, target.order).estimate


def sup_deviation(
    sample: PairedSample,
    kernel: Kernel,
    h: float,
    target: ScanTarget,
    centering: Centering,
    xgrid: np.ndarray | list[float],
    model: Optional[TruthModel] = None,
    center: Optional[CenterSource] = None,
) -> Deviation:
    """max over the x-grid of |estimate(x) - center(x)|.

    *center* overrides the model-derived center with explicit values or a
    callable of x. Points where the estimator has no kernel mass or a
    singular design are skipped and counted.
    """
    xgrid = np.asarray(xgrid, dtype=float)
    lo, hi = sample.interval
    if np.any((xgrid < lo) | (xgrid > hi)):
        raise ArgumentError(f"x-grid leaves the interval {sample.interval}")

    if center is None:
        if model is None:
            raise ArgumentError("a truth model or explicit center is required")
        centers = target_centers(target, centering, kernel, h, xgrid, model)
    elif callable(center):
        centers = np.array([float(center(float(x))) for x in xgrid])
    else:
        centers = np.asarray(center, dtype=float)
        if centers.shape != xgrid.shape:
            raise ArgumentError("explicit centers must match the x-grid")

    worst = 0.0
    skipped = 0
    for x0, c0 in zip(xgrid, centers):
        try:
            value = _estimate(sample, kernel, h, target, float(x0))
        except (EmptyWindowError, SingularDesignError):
            skipped += 1
            continue
        worst = max(worst, abs(value - float(c0)))

    evaluated = len(xgrid) - skipped
    if evaluated == 0:
        raise DegenerateScanError(f"every x-grid point was skipped at h={h}")
    if skipped:
        logger.debug("Skipped %d of %d grid point(s) at h=%g", skipped, len(xgrid), h)
    return Deviation(value=worst, skipped_points=skipped, evaluated_points=evaluated)


def rate_statistic(sup_dev: float, n: int, h: float) -> float:
    """sqrt(nh) * sup_dev / sqrt(max(|log h|, log log n))."""
    if n < MIN_SAMPLE_SIZE:
        raise ArgumentError(f"rate statistics need n >= {MIN_SAMPLE_SIZE}, got {n}")
    if not 0 < h < 1:
        raise ArgumentError(f"bandwidth must lie in (0, 1), got {h}")
    if sup_dev < 0:
        raise ArgumentError("a sup-norm deviation cannot be negative")
    scale = max(abs(math.log(h)), math.log(math.log(n)))
    return math.sqrt(n * h) * sup_dev / math.sqrt(scale)


# ---------------------------------------------------------------------- #
# Scans
# ---------------------------------------------------------------------- #


def uib_scan(
    sample: PairedSample,
    kernel: Kernel,
    grid: BandwidthGrid,
    target: ScanTarget,
    centering: Centering,
    xgrid: Optional[np.ndarray | list[float]] = None,
    model: Optional[TruthModel] = None,
    centers: Optional[CenterProvider] = None,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
    replicate: Optional[int] = None,
) -> RateReport:
    """Deviation and rate statistic at every bandwidth of *grid*.

    Regression targets centered at the true function report the plain
    sup-norm deviation instead of the normalized statistic.
    """
    if any(not 0 < h < 1 for h in grid.hs):
        raise ArgumentError("every grid bandwidth must lie in (0, 1)")
    if target.kind is TargetKind.REGRESSION and centering is Centering.EXPECTATION:
        raise ArgumentError("regression targets are centered at the true function")
    normalized = not (
        target.kind is TargetKind.REGRESSION and centering is Centering.TRUE_FUNCTION
    )
    if normalized and sample.n < MIN_SAMPLE_SIZE:
        raise ArgumentError(f"rate statistics need n >= {MIN_SAMPLE_SIZE}, got {sample.n}")

    xgrid = np.asarray(
        interval_grid(sample.interval) if xgrid is None else xgrid, dtype=float
    )
    if centers is None:
        if model is None:
            raise ArgumentError("a truth model or a center provider is required")
        centers = CenterCache(target, centering, kernel, model)

    admissible = grid.h0 < (2 * sample.margin) ** sample.dim
    if not admissible:
        logger.warning(
            "h0=%g violates h0 < (2*eta)^d with eta=%g; scanning anyway",
            grid.h0,
            sample.margin,
        )

    def _row(h: float) -> RateRow:
        try:
            dev = sup_deviation(
                sample, kernel, h, target, centering, xgrid, center=centers(h, xgrid)
            )
        except DegenerateScanError as exc:
            logger.warning("Degenerate scan for %s: %s", target.label, exc)
            return RateRow(
                h=h, sup_dev=0.0, rate_stat=0.0, skipped_points=len(xgrid), status="degenerate"
            )
        stat = rate_statistic(dev.value, sample.n, h) if normalized else dev.value
        return RateRow(h=h, sup_dev=dev.value, rate_stat=stat, skipped_points=dev.skipped_points)

    rows = map_ordered(_row, grid.hs, workers)
    overall = max((row.rate_stat for row in rows if row.status == "ok"), default=0.0)
    return RateReport(
        n=sample.n,
        target=target,
        centering=centering,
        rows=rows,
        overall_rate_stat=overall,
        normalized=normalized,
        xgrid_points=len(xgrid),
        grid_kind=grid.kind,
        gamma=grid.gamma,
        h0_admissible=admissible,
        seed=seed,
        replicate=replicate,
    )
