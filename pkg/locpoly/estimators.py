"""Sample-based kernel estimators and the local polynomial fit.

All regression estimators work in one dimension. Windows are closed:
an observation contributes at x0 when |x0 - X_i| <= h/2.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from locpoly.errors import ArgumentError, EmptyWindowError, SingularDesignError
from locpoly.kernels import Kernel, evaluate_on
from locpoly.models import CurvePoint, LocalPolyFit, MomentStats, PairedSample
from locpoly.workers import map_ordered

logger = logging.getLogger(__name__)

Psi = Callable[[np.ndarray], np.ndarray]

# Largest condition number of A_{x0} accepted before a fit is refused.
MAX_CONDITION = 1e8
CLOSED_FORM_FLOOR = 1e-14
_EDGE_SLACK = 1e-12


# ---------------------------------------------------------------------- #
# Response transforms
# ---------------------------------------------------------------------- #


def identity(y: np.ndarray) -> np.ndarray:
    return np.asarray(y, dtype=float)


def indicator(t: float) -> Psi:
    """psi_t(y) = 1{y <= t}."""

    def psi(y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) <= t).astype(float)

    psi.__name__ = f"indicator_{t:g}"
    return psi


def clipped(m: float) -> Psi:
    """Bounded Lipschitz transform y -> max(-m, min(m, y))."""
    if not m > 0:
        raise ArgumentError(f"clip level must be positive, got {m}")

    def psi(y: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(y, dtype=float), -m, m)

    psi.__name__ = f"clip_{m:g}"
    return psi


def parse_psi(text: str) -> Psi:
    """Parse ``identity``, ``indicator:<t>`` or ``clip:<m>``."""
    name, _, arg = text.strip().lower().partition(":")
    try:
        if name == "identity" and not arg:
            return identity
        if name == "indicator":
            return indicator(float(arg))
        if name == "clip":
            return clipped(float(arg))
    except ValueError as exc:
        raise ArgumentError(f"bad transform argument in {text!r}") from exc
    raise ArgumentError(f"unknown response transform {text!r}")


# ---------------------------------------------------------------------- #
# Windows
# ---------------------------------------------------------------------- #


def _check_bandwidth(h: float) -> None:
    if not (h > 0 and math.isfinite(h)):
        raise ArgumentError(f"bandwidth must be positive and finite, got {h}")


def _window(
    sample: PairedSample, kernel: Kernel, h: float, x0: float
) -> tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """Sorted X, Y and u = (x0 - X)/h for the observations near x0."""
    xs = sample.sorted_xs
    half = kernel.support_halfwidth * h
    pad = _EDGE_SLACK * max(1.0, abs(x0), h)
    lo = int(np.searchsorted(xs, x0 - half - pad, side="left"))
    hi = int(np.searchsorted(xs, x0 + half + pad, side="right"))
    wx = xs[lo:hi]
    ys = sample.sorted_ys
    wy = ys[lo:hi] if ys is not None else None
    return wx, wy, (x0 - wx) / h


def _require_response(sample: PairedSample) -> None:
    if not sample.has_response:
        raise ArgumentError("this estimator needs responses; the sample has only x")


def _require_nonneg(kernel: Kernel) -> None:
    if not kernel.is_nonneg:
        raise ArgumentError(f"kernel {kernel.name!r} must be nonnegative for regression")


# ---------------------------------------------------------------------- #
# Density and Nadaraya-Watson estimators
# ---------------------------------------------------------------------- #


def kde(
    sample: PairedSample, kernel: Kernel, h: float, x: float | np.ndarray
) -> float | np.ndarray:
    """(nh)^-1 sum K((x - X_i)/h^(1/d)).

    In one dimension *x* may be a scalar or an array of points; in d
    dimensions it is a point of shape (d,) or an array of shape (m, d).
    """
    _check_bandwidth(h)
    if sample.dim == 1:
        points = np.asarray(x, dtype=float)
        values = np.array(
            [_kde_point(sample, kernel, h, float(x0)) for x0 in points.ravel()]
        ).reshape(points.shape)
        return float(values) if points.ndim == 0 else values

    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[1] != sample.dim:
        raise ArgumentError(f"points must have dimension {sample.dim}")
    scale = h ** (1.0 / sample.dim)
    u = (points[:, None, :] - sample.xs[None, :, :]) / scale
    values = kernel.product(u).sum(axis=1) / (sample.n * h)
    return float(values[0]) if single else values


def _kde_point(sample: PairedSample, kernel: Kernel, h: float, x0: float) -> float:
    _, _, u = _window(sample, kernel, h, x0)
    return float(kernel(u).sum()) / (sample.n * h)


def nadaraya_watson(
    sample: PairedSample,
    kernel: Kernel,
    h: float,
    x0: float,
    psi: Psi = identity,
) -> float:
    """sum psi(Y_i) K((x0 - X_i)/h) / sum K((x0 - X_i)/h)."""
    _check_bandwidth(h)
    _require_response(sample)
    _, wy, u = _window(sample, kernel, h, x0)
    weights = kernel(u)
    mass = float(weights.sum())
    if not mass > 0.0:
        raise EmptyWindowError(f"no kernel mass at x0={x0} with h={h}")
    return float(np.dot(evaluate_on(psi, wy), weights)) / mass


def conditional_ecdf(
    sample: PairedSample, kernel: Kernel, h: float, x0: float, t: float
) -> float:
    """Kernel estimate of P(Y <= t | X = x0)."""
    _require_nonneg(kernel)
    value = nadaraya_watson(sample, kernel, h, x0, indicator(t))
    return min(1.0, max(0.0, value))


# ---------------------------------------------------------------------- #
# Moment statistics
# ---------------------------------------------------------------------- #


def _weighted_moments(
    sample: PairedSample,
    kernel: Kernel,
    h: float,
    x0: float,
    f_orders: int,
    r_orders: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    _, wy, u = _window(sample, kernel, h, x0)
    weights = kernel(u)
    count = int(np.count_nonzero(weights > 0.0))
    scale = 1.0 / (sample.n * h)

    orders = max(f_orders, r_orders)
    powers = (-u)[None, :] ** np.arange(orders)[:, None]
    ftilde = powers[:f_orders] @ weights * scale
    if r_orders:
        rtilde = powers[:r_orders] @ (weights * wy) * scale
    else:
        rtilde = np.zeros(0)
    return ftilde, rtilde, count


def ftilde_value(sample: PairedSample, kernel: Kernel, h: float, x0: float, j: int) -> float:
    """f~_{n,h,j}(x0); needs no responses."""
    _check_bandwidth(h)
    ftilde, _, _ = _weighted_moments(sample, kernel, h, x0, j + 1, 0)
    return float(ftilde[j])


def rtilde_value(sample: PairedSample, kernel: Kernel, h: float, x0: float, j: int) -> float:
    """r~_{n,h,j}(x0)."""
    _check_bandwidth(h)
    _require_response(sample)
    _, rtilde, _ = _weighted_moments(sample, kernel, h, x0, 0, j + 1)
    return float(rtilde[j])


def moment_stats(
    sample: PairedSample, kernel: Kernel, h: float, x0: float, p: int
) -> MomentStats:
    """f~_{n,h,0..2p}(x0) and r~_{n,h,0..p}(x0).

    The powers are ((X_i - x0)/h)^j = (-u)^j with u = (x0 - X_i)/h.
    """
    _check_bandwidth(h)
    _require_response(sample)
    if p < 0:
        raise ArgumentError(f"degree must be nonnegative, got {p}")
    ftilde, rtilde, _ = _weighted_moments(sample, kernel, h, x0, 2 * p + 1, p + 1)
    return MomentStats(x0=x0, h=h, ftilde=ftilde.tolist(), rtilde=rtilde.tolist())


# ---------------------------------------------------------------------- #
# Local polynomial fit
# ---------------------------------------------------------------------- #


def scaled_design_matrix(ftilde: list[float] | np.ndarray, p: int) -> np.ndarray:
    """A_{x0} with entries f~_{j+k}, 0 <= j, k <= p."""
    ftilde = np.asarray(ftilde, dtype=float)
    return linalg.hankel(ftilde[: p + 1], ftilde[p : 2 * p + 1])


def raw_design_matrix(
    sample: PairedSample, kernel: Kernel, h: float, x0: float, p: int
) -> np.ndarray:
    """S_{x0} = X^t W X built from the full design, without rescaling."""
    _check_bandwidth(h)
    xs = np.asarray(sample.xs, dtype=float)
    design = (xs - x0)[:, None] ** np.arange(p + 1)[None, :]
    weights = kernel((x0 - xs) / h)
    return design.T @ (weights[:, None] * design)


def local_poly_fit(
    sample: PairedSample,
    kernel: Kernel,
    h: float,
    x0: float,
    p: int,
    max_condition: float = MAX_CONDITION,
) -> LocalPolyFit:
    """Solve the kernel-weighted least-squares problem of degree p at x0.

    The scaled system A gamma = r~ is solved and beta_k = gamma_k / h^k.
    """
    _check_bandwidth(h)
    _require_response(sample)
    _require_nonneg(kernel)
    if p < 0:
        raise ArgumentError(f"degree must be nonnegative, got {p}")

    ftilde, rtilde, count = _weighted_moments(sample, kernel, h, x0, 2 * p + 1, p + 1)
    if count == 0:
        raise EmptyWindowError(f"no observations within h/2 of x0={x0} (h={h})")

    design = scaled_design_matrix(ftilde, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        condition = float(np.linalg.cond(design))
    if not math.isfinite(condition) or condition > max_condition:
        raise SingularDesignError(
            f"A_x0 at x0={x0}, h={h}, p={p} has condition {condition:.3g}", condition
        )
    try:
        gamma = linalg.solve(design, rtilde, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularDesignError(f"A_x0 at x0={x0} is singular: {exc}", condition) from exc

    beta = gamma / h ** np.arange(p + 1)
    return LocalPolyFit(
        x0=x0,
        h=h,
        p=p,
        beta=beta.tolist(),
        cond_A=condition,
        n_in_window=count,
    )


def closed_form_fit(stats: MomentStats, p: int) -> float:
    """Local polynomial estimate of g(x0) from explicit ratios, p in {0, 1, 2}."""
    if p not in (0, 1, 2):
        raise ArgumentError(f"closed forms exist for p in {{0, 1, 2}}, got {p}")
    if len(stats.ftilde) < 2 * p + 1 or len(stats.rtilde) < p + 1:
        raise ArgumentError(f"moment statistics are too short for p={p}")
    f = stats.ftilde
    r = stats.rtilde

    if p == 0:
        numerator = r[0]
        terms = [f[0]]
    elif p == 1:
        numerator = f[2] * r[0] - f[1] * r[1]
        terms = [f[0] * f[2], -f[1] ** 2]
    else:
        numerator = (
            (f[2] * f[4] - f[3] ** 2) * r[0]
            + (f[2] * f[3] - f[1] * f[4]) * r[1]
            + (f[1] * f[3] - f[2] ** 2) * r[2]
        )
        terms = [
            f[0] * f[2] * f[4],
            -f[0] * f[3] ** 2,
            -f[1] ** 2 * f[4],
            2.0 * f[1] * f[2] * f[3],
            -f[2] ** 3,
        ]

    denominator = math.fsum(terms)
    scale = max(abs(term) for term in terms)
    if scale == 0.0 or abs(denominator) < CLOSED_FORM_FLOOR * scale:
        raise SingularDesignError(f"closed-form denominator vanishes at x0={stats.x0}")
    return numerator / denominator


def regression_curve(
    sample: PairedSample,
    kernel: Kernel,
    h: float,
    p: int,
    xgrid: list[float] | np.ndarray,
    workers: Optional[int] = None,
) -> list[CurvePoint]:
    """local_poly_fit at every grid point; failures become status markers."""
    points = [float(x) for x in np.asarray(xgrid, dtype=float).ravel()]
    lo, hi = sample.interval
    outside = [x for x in points if not lo <= x <= hi]
    if outside:
        raise ArgumentError(f"{len(outside)} grid point(s) fall outside {sample.interval}")

    def _fit(x0: float) -> CurvePoint:
        try:
            return CurvePoint(x0=x0, fit=local_poly_fit(sample, kernel, h, x0, p))
        except EmptyWindowError:
            logger.debug("Empty window at x0=%g, h=%g", x0, h)
            return CurvePoint(x0=x0, status="empty_window")
        except SingularDesignError as exc:
            logger.debug("Singular design at x0=%g: %s", x0, exc)
            return CurvePoint(x0=x0, status="singular")

    return map_ordered(_fit, points, workers)
