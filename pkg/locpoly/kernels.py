"""Kernels, the transformed families H^(j), kernel moments and convolutions.

Every built-in kernel is supported on [-1/2, 1/2]. Moments and
convolution expectations are computed by composite Simpson quadrature on a
fixed partition of the support, refined once when two resolutions
disagree.
"""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate

from locpoly.errors import ArgumentError, EvaluationError, SingularGramError
from locpoly.models import GramMatrix, KernelId

logger = logging.getLogger(__name__)

RealFunction = Callable[[np.ndarray], np.ndarray]

QUADRATURE_NODES = 2049
MOMENT_TOLERANCE = 1e-10
CONVOLUTION_TOLERANCE = 1e-9
WINDOW_SLACK = 1e-6


# ---------------------------------------------------------------------- #
# Quadrature helpers
# ---------------------------------------------------------------------- #


def evaluate_on(fn: Callable, points: np.ndarray) -> np.ndarray:
    """Evaluate *fn* on an array of points.

    Vectorized callables are used as-is; scalar-only callables are applied
    element by element.
    """
    points = np.asarray(points, dtype=float)
    try:
        values = np.asarray(fn(points), dtype=float)
    except (TypeError, ValueError):
        values = None
    if values is not None and values.ndim == 0:
        return np.full(points.shape, float(values))
    if values is None or values.shape != points.shape:
        flat = [float(fn(float(p))) for p in points.ravel()]
        values = np.array(flat, dtype=float).reshape(points.shape)
    return values


def _simpson_fixed(fn: Callable, lo: float, hi: float, nodes: int) -> float:
    grid = np.linspace(lo, hi, nodes)
    values = evaluate_on(fn, grid)
    if not np.all(np.isfinite(values)):
        raise EvaluationError(f"integrand is not finite on [{lo}, {hi}]")
    return float(integrate.simpson(values, x=grid))


def simpson(
    fn: Callable,
    lo: float,
    hi: float,
    nodes: int = QUADRATURE_NODES,
    tolerance: float = MOMENT_TOLERANCE,
) -> float:
    """Composite Simpson integral of *fn* over [lo, hi].

    The integral is taken at ``nodes`` and at half that resolution; if the
    two disagree by more than ``tolerance`` it is recomputed once on a
    partition twice as fine.
    """
    coarse = _simpson_fixed(fn, lo, hi, (nodes + 1) // 2)
    value = _simpson_fixed(fn, lo, hi, nodes)
    if abs(value - coarse) > tolerance:
        logger.debug("Refining quadrature on [%g, %g]: |%g - %g|", lo, hi, value, coarse)
        value = _simpson_fixed(fn, lo, hi, 2 * nodes - 1)
    return value


# ---------------------------------------------------------------------- #
# Kernels
# ---------------------------------------------------------------------- #


class Kernel(BaseModel):
    """A compactly supported weight function with its analytic metadata."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: KernelId
    name: str
    evaluate: RealFunction
    support_halfwidth: float = Field(default=0.5, gt=0.0, le=0.5)
    sup_norm: float = Field(gt=0.0)
    is_nonneg: bool = True
    moment_formula: Optional[Callable[[int], float]] = Field(default=None, repr=False)

    @model_validator(mode="after")
    def _check_mass(self) -> "Kernel":
        s = self.support_halfwidth
        mass = simpson(lambda u: evaluate_on(self.evaluate, u), -s, s)
        if abs(mass - 1.0) > MOMENT_TOLERANCE:
            raise ValueError(f"kernel {self.name!r} integrates to {mass!r}, not 1")
        return self

    def __call__(self, u: np.ndarray | float) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        values = evaluate_on(self.evaluate, u)
        return np.where(np.abs(u) <= self.support_halfwidth, values, 0.0)

    def product(self, u: np.ndarray) -> np.ndarray:
        """Product kernel on [-1/2, 1/2]^d; the last axis of *u* is the dimension."""
        return np.prod(self(u), axis=-1)

    @classmethod
    def custom(
        cls,
        evaluate: RealFunction,
        name: str = "custom",
        support_halfwidth: float = 0.5,
        sup_norm: Optional[float] = None,
    ) -> "Kernel":
        """Build and validate a user kernel.

        ``sup_norm`` and nonnegativity are measured on a fine grid of the
        support when not given.
        """
        if not 0 < support_halfwidth <= 0.5:
            raise ArgumentError("custom kernels must be supported within [-1/2, 1/2]")
        grid = np.linspace(-support_halfwidth, support_halfwidth, 4 * QUADRATURE_NODES + 1)
        values = evaluate_on(evaluate, grid)
        if not np.all(np.isfinite(values)):
            raise EvaluationError(f"kernel {name!r} is not finite on its support")
        try:
            return cls(
                id=KernelId.CUSTOM,
                name=name,
                evaluate=evaluate,
                support_halfwidth=support_halfwidth,
                sup_norm=sup_norm if sup_norm is not None else float(np.max(np.abs(values))),
                is_nonneg=bool(np.min(values) >= 0.0),
            )
        except ValueError as exc:
            raise ArgumentError(str(exc)) from exc


def _uniform(u: np.ndarray) -> np.ndarray:
    return np.ones_like(u)


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    return 6.0 * (0.25 - u * u)


def _triangular(u: np.ndarray) -> np.ndarray:
    return 4.0 * (0.5 - np.abs(u))


def _uniform_moment(j: int) -> float:
    return 0.0 if j % 2 else 0.5**j / (j + 1)


def _epanechnikov_moment(j: int) -> float:
    if j % 2:
        return 0.0
    return 6.0 * (0.25 * 0.5**j / (j + 1) - 0.5 ** (j + 2) / (j + 3))


def _triangular_moment(j: int) -> float:
    return 0.0 if j % 2 else 2.0 * 0.5**j / ((j + 1) * (j + 2))


_BUILTINS: dict[str, tuple[KernelId, RealFunction, float, Callable[[int], float]]] = {
    "uniform": (KernelId.UNIFORM, _uniform, 1.0, _uniform_moment),
    "epanechnikov": (KernelId.EPANECHNIKOV01, _epanechnikov, 1.5, _epanechnikov_moment),
    "triangular": (KernelId.TRIANGULAR, _triangular, 2.0, _triangular_moment),
}

_ALIASES = {"epanechnikov01": "epanechnikov", "box": "uniform"}

KERNEL_NAMES = tuple(_BUILTINS)


@lru_cache(maxsize=None)
def get_kernel(name: str) -> Kernel:
    """Return the built-in kernel registered under *name*."""
    key = _ALIASES.get(name.strip().lower(), name.strip().lower())
    if key not in _BUILTINS:
        raise ArgumentError(
            f"unknown kernel {name!r}; choose one of {', '.join(KERNEL_NAMES)}"
        )
    kernel_id, fn, kappa, formula = _BUILTINS[key]
    return Kernel(
        id=kernel_id,
        name=key,
        evaluate=fn,
        sup_norm=kappa,
        is_nonneg=True,
        moment_formula=formula,
    )


class TransformedKernel(BaseModel):
    """H^(j)(u) = (-u)^j K(u)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    base: Kernel
    order: int = Field(ge=0)

    def __call__(self, u: np.ndarray | float) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return (-u) ** self.order * self.base(u)

    @property
    def support_halfwidth(self) -> float:
        return self.base.support_halfwidth

    @property
    def bound(self) -> float:
        return self.base.sup_norm * self.base.support_halfwidth**self.order


def transformed(kernel: Kernel, order: int) -> TransformedKernel:
    return TransformedKernel(base=kernel, order=order)


# ---------------------------------------------------------------------- #
# Moments and the Gram matrix
# ---------------------------------------------------------------------- #


def quadrature_moment(kernel: Kernel, j: int) -> float:
    """mu_j by quadrature, regardless of any closed form."""
    if j < 0:
        raise ArgumentError(f"moment order must be nonnegative, got {j}")
    s = kernel.support_halfwidth
    tk = transformed(kernel, j)
    return simpson(tk, -s, s)


def kernel_moment(kernel: Kernel, j: int) -> float:
    """mu_j = integral of (-u)^j K(u) du."""
    if j < 0:
        raise ArgumentError(f"moment order must be nonnegative, got {j}")
    if kernel.moment_formula is not None:
        return float(kernel.moment_formula(j))
    return quadrature_moment(kernel, j)


def gram_matrix(kernel: Kernel, p: int) -> GramMatrix:
    """(p+1) x (p+1) matrix of kernel moments mu_{j+k}."""
    if p < 0:
        raise ArgumentError(f"degree must be nonnegative, got {p}")
    if not kernel.is_nonneg:
        raise ArgumentError(f"kernel {kernel.name!r} takes negative values")

    moments = [kernel_moment(kernel, i) for i in range(2 * p + 1)]
    entries = [[moments[j + k] for k in range(p + 1)] for j in range(p + 1)]
    smallest = float(np.linalg.eigvalsh(np.array(entries))[0])
    if not smallest > 0.0:
        raise SingularGramError(
            f"Gram matrix of {kernel.name!r} at p={p} has smallest eigenvalue {smallest:g}"
        )
    return GramMatrix(degree=p, entries=entries, smallest_eigenvalue=smallest)


# ---------------------------------------------------------------------- #
# Convolution expectations
# ---------------------------------------------------------------------- #


def _convolve_fixed(
    fn: Callable, tk: TransformedKernel, h: float, xs: np.ndarray, nodes: int
) -> np.ndarray:
    s = tk.support_halfwidth
    u = np.linspace(-s, s, nodes)
    points = xs[:, None] - h * u[None, :]
    values = evaluate_on(fn, points)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("function is not finite inside the kernel window")
    return integrate.simpson(tk(u)[None, :] * values, x=u, axis=1)


def convolve_on_grid(
    fn: Callable, tk: TransformedKernel, h: float, xs: np.ndarray | list[float]
) -> np.ndarray:
    """h^-1 * integral of H^(j)((x - t)/h) fn(t) dt for every x in *xs*.

    *fn* may take either sign; this is the expectation of f~ (fn = f_X) and
    of r~ (fn = g * f_X) at bandwidth h.
    """
    if not h > 0:
        raise ArgumentError(f"bandwidth must be positive, got {h}")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    coarse = _convolve_fixed(fn, tk, h, xs, (QUADRATURE_NODES + 1) // 2)
    values = _convolve_fixed(fn, tk, h, xs, QUADRATURE_NODES)
    if np.max(np.abs(values - coarse)) > CONVOLUTION_TOLERANCE:
        values = _convolve_fixed(fn, tk, h, xs, 2 * QUADRATURE_NODES - 1)
    return values


def convolution_expectation(
    density: Callable, tk: TransformedKernel, h: float, x0: float
) -> float:
    """f * H_h^(j)(x0), the expectation of H^(j)_{n,h}(x0) under *density*."""
    if not h > 0:
        raise ArgumentError(f"bandwidth must be positive, got {h}")
    half = tk.support_halfwidth * h + WINDOW_SLACK
    window = np.linspace(x0 - half, x0 + half, 257)
    values = evaluate_on(density, window)
    if not np.all(np.isfinite(values)):
        raise EvaluationError(f"density is not finite near x0={x0}")
    if np.min(values) < 0.0:
        raise ArgumentError(f"density is negative near x0={x0}")
    return float(convolve_on_grid(density, tk, h, [x0])[0])


def limit_value(density: Callable, tk: TransformedKernel, x0: float) -> float:
    """mu_j * density(x0), the h -> 0 limit of convolution_expectation."""
    value = float(evaluate_on(density, np.array([x0]))[0])
    return kernel_moment(tk.base, tk.order) * value


def moment_fraction(value: float, max_denominator: int = 10**6) -> str:
    """Render *value* as a reduced fraction when it is one, else as a float."""
    frac = Fraction(value).limit_denominator(max_denominator)
    if math.isclose(float(frac), value, rel_tol=0.0, abs_tol=1e-13):
        return str(frac)
    return f"{value:.12g}"
