"""Shared Pydantic data models for locpoly."""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, Optional

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    field_validator,
    model_validator,
)


class KernelId(str, Enum):
    UNIFORM = "uniform"
    EPANECHNIKOV01 = "epanechnikov"
    TRIANGULAR = "triangular"
    CUSTOM = "custom"


class GridKind(str, Enum):
    DYADIC = "dyadic"
    POWER_LAW = "power_law"
    EXPLICIT = "explicit"


class TargetKind(str, Enum):
    KDE = "kde"
    FTILDE = "ftilde"
    RTILDE = "rtilde"
    REGRESSION = "regression"


class Centering(str, Enum):
    EXPECTATION = "expectation"
    TRUE_FUNCTION = "true"


class NoiseKind(str, Enum):
    BOUNDED_UNIFORM = "bounded_uniform"
    STUDENT_T = "student_t"


class MomentRegime(str, Enum):
    MM = "MM"
    PP = "PP"


class ClassKind(str, Enum):
    KERNEL_TRANSLATES = "kernel-translates"
    INDICATOR_WINDOWS = "indicator-windows"
    PRODUCT = "product"
    EXPLICIT = "explicit"


# ---------------------------------------------------------------------- #
# Samples and fits
# ---------------------------------------------------------------------- #


class PairedSample(BaseModel):
    """Observations (X_i, Y_i) together with the interval I and margin eta.

    ``ys`` is absent for pure density work. ``xs`` is one-dimensional for
    regression; a two-dimensional ``(n, d)`` array is accepted for density
    estimation in ``d`` dimensions.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    xs: np.ndarray
    ys: Optional[np.ndarray] = None
    interval: tuple[float, float]
    margin: float = Field(gt=0.0, lt=1.0)

    _sorted_xs: Optional[np.ndarray] = PrivateAttr(default=None)
    _sorted_ys: Optional[np.ndarray] = PrivateAttr(default=None)

    @field_validator("xs", "ys", mode="before")
    @classmethod
    def _as_finite_array(cls, value: Any) -> Optional[np.ndarray]:
        if value is None:
            return None
        arr = np.array(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("observations must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_shapes(self) -> "PairedSample":
        if self.xs.ndim not in (1, 2) or self.xs.shape[0] < 1:
            raise ValueError("xs must hold at least one observation")
        if self.ys is not None:
            if self.ys.ndim != 1 or self.ys.shape[0] != self.xs.shape[0]:
                raise ValueError("xs and ys must have equal length")
            if self.xs.ndim != 1:
                raise ValueError("paired samples are one-dimensional in x")
        lo, hi = self.interval
        if not lo < hi:
            raise ValueError(f"interval {self.interval} is empty")
        return self

    def model_post_init(self, __context: Any) -> None:
        if self.xs.ndim == 1:
            order = np.argsort(self.xs, kind="stable")
            self._sorted_xs = self.xs[order]
            if self.ys is not None:
                self._sorted_ys = self.ys[order]

    @property
    def n(self) -> int:
        return int(self.xs.shape[0])

    @property
    def dim(self) -> int:
        return 1 if self.xs.ndim == 1 else int(self.xs.shape[1])

    @property
    def has_response(self) -> bool:
        return self.ys is not None

    @property
    def sorted_xs(self) -> np.ndarray:
        if self._sorted_xs is None:
            raise ValueError("sorted view only exists for one-dimensional samples")
        return self._sorted_xs

    @property
    def sorted_ys(self) -> Optional[np.ndarray]:
        return self._sorted_ys

    @property
    def inflated_interval(self) -> tuple[float, float]:
        """J = I inflated by the margin on each side."""
        lo, hi = self.interval
        return (lo - self.margin, hi + self.margin)


class LocalPolyFit(BaseModel):
    """Weighted least-squares coefficients at one (x0, h, p)."""

    x0: float
    h: float
    p: int = Field(ge=0)
    beta: list[float]
    cond_A: float
    n_in_window: int = Field(ge=0)

    @model_validator(mode="after")
    def _check_length(self) -> "LocalPolyFit":
        if len(self.beta) != self.p + 1:
            raise ValueError("beta must hold p+1 coefficients")
        return self

    @property
    def estimate(self) -> float:
        return self.beta[0]

    def derivative(self, k: int) -> float:
        """Estimate of the k-th derivative of g at x0, k! * beta_k."""
        if not 0 <= k <= self.p:
            raise ValueError(f"derivative order {k} outside 0..{self.p}")
        return math.factorial(k) * self.beta[k]


class MomentStats(BaseModel):
    """The kernel-weighted moment statistics f~_{n,h,j} and r~_{n,h,j}."""

    x0: float
    h: float
    ftilde: list[float]
    rtilde: list[float]

    @property
    def p(self) -> int:
        return len(self.rtilde) - 1


class CurvePoint(BaseModel):
    """One grid point of a batch regression evaluation."""

    x0: float
    fit: Optional[LocalPolyFit] = None
    status: str = "ok"


class GramMatrix(BaseModel):
    """Kernel moment matrix with entries mu_{j+k}."""

    degree: int = Field(ge=0)
    entries: list[list[float]]
    smallest_eigenvalue: float

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)


# ---------------------------------------------------------------------- #
# Bandwidth scans
# ---------------------------------------------------------------------- #


class BandwidthGrid(BaseModel):
    """Bandwidths at which a uniform-in-h scan is evaluated."""

    c: float = Field(gt=0.0)
    n: int = Field(ge=1)
    h0: float
    hs: list[float]
    kind: GridKind
    gamma: float = 1.0

    @field_validator("hs")
    @classmethod
    def _ascending(cls, hs: list[float]) -> list[float]:
        if not hs:
            raise ValueError("bandwidth grid is empty")
        if any(h <= 0 for h in hs):
            raise ValueError("bandwidths must be positive")
        if any(b <= a for a, b in zip(hs, hs[1:])):
            raise ValueError("bandwidths must be strictly increasing")
        return hs

    @property
    def l_n(self) -> int:
        return len(self.hs) - 1


class ScanTarget(BaseModel):
    """The estimator whose sup-norm deviation is scanned."""

    kind: TargetKind
    order: int = Field(default=0, ge=0)

    @classmethod
    def parse(cls, text: str) -> "ScanTarget":
        """Parse ``kde``, ``ftilde:1``, ``rtilde:0`` or ``regression:2``."""
        name, _, order = text.strip().lower().partition(":")
        try:
            kind = TargetKind(name)
        except ValueError as exc:
            raise ValueError(f"unknown scan target {text!r}") from exc
        return cls(kind=kind, order=int(order) if order else 0)

    @property
    def label(self) -> str:
        if self.kind is TargetKind.KDE:
            return "kde"
        return f"{self.kind.value}({self.order})"


class Deviation(BaseModel):
    """Sup-norm deviation over an x-grid at a single bandwidth."""

    value: float = Field(ge=0.0)
    skipped_points: int = Field(ge=0)
    evaluated_points: int = Field(ge=0)


class RateRow(BaseModel):
    h: float
    sup_dev: float
    rate_stat: float
    skipped_points: int = 0
    status: str = "ok"


class RateReport(BaseModel):
    """Per-bandwidth deviations and rate statistics for one sample."""

    n: int
    target: ScanTarget
    centering: Centering
    rows: list[RateRow]
    overall_rate_stat: float = Field(ge=0.0)
    normalized: bool = True
    xgrid_points: int
    grid_kind: GridKind
    gamma: float = 1.0
    h0_admissible: bool = True
    seed: Optional[int] = None
    replicate: Optional[int] = None

    @property
    def degenerate(self) -> bool:
        return all(row.status != "ok" for row in self.rows)

    @property
    def sup_over_h(self) -> float:
        """Largest sup-norm deviation over the bandwidth grid."""
        values = [row.sup_dev for row in self.rows if row.status == "ok"]
        return max(values) if values else 0.0


class SummaryRow(BaseModel):
    """Percentiles of overall_rate_stat across replicates at one n."""

    n: int
    replicates: int
    p10: float
    median: float
    p90: float
    p99: float
    maximum: float
    mean_sup_dev: float


class StudyResult(BaseModel):
    reports: list[RateReport]
    summary: list[SummaryRow]
    failures: list[str] = Field(default_factory=list)
    flags: list[str] = Field(default_factory=list)
    gamma_convention: str = "bounded"


# ---------------------------------------------------------------------- #
# Empirical process checks
# ---------------------------------------------------------------------- #


class FunctionClassSpec(BaseModel):
    """A finite parameter-grid discretization of a function class.

    ``kernel-translates`` holds u -> H^(j)((x - u)/h) and
    ``indicator-windows`` holds u -> 1{|x - u| <= h/2}, each over the
    product grid ``h_values`` x ``x_values``. ``product`` multiplies the
    members of its two ``factors`` pairwise; ``explicit`` lists vectorized
    callables directly.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: ClassKind
    kernel: str = "uniform"
    order: int = Field(default=0, ge=0)
    h_values: list[float] = Field(default_factory=list)
    x_values: list[float] = Field(default_factory=list)
    envelope: Optional[float] = None
    factors: list["FunctionClassSpec"] = Field(default_factory=list)
    functions: list[Any] = Field(default_factory=list, exclude=True)

    @model_validator(mode="after")
    def _check_kind(self) -> "FunctionClassSpec":
        if self.kind in (ClassKind.KERNEL_TRANSLATES, ClassKind.INDICATOR_WINDOWS):
            if not self.h_values or not self.x_values:
                raise ValueError(f"{self.kind.value} needs h_values and x_values")
            if any(h <= 0 for h in self.h_values):
                raise ValueError("bandwidths must be positive")
        elif self.kind is ClassKind.PRODUCT:
            if len(self.factors) != 2:
                raise ValueError("a product class needs exactly two factors")
        elif self.kind is ClassKind.EXPLICIT:
            if self.envelope is None:
                raise ValueError("an explicit class needs an envelope")
        if self.envelope is not None and self.envelope < 0:
            raise ValueError("envelope must be nonnegative")
        return self

    @classmethod
    def kernel_translates(
        cls,
        kernel: str,
        order: int,
        h_range: tuple[float, float],
        x_range: tuple[float, float],
        h_count: int = 1,
        x_count: int = 401,
    ) -> "FunctionClassSpec":
        return cls(
            kind=ClassKind.KERNEL_TRANSLATES,
            kernel=kernel,
            order=order,
            h_values=_linspace(h_range, h_count),
            x_values=_linspace(x_range, x_count),
        )

    @classmethod
    def indicator_windows(
        cls,
        h_range: tuple[float, float],
        x_range: tuple[float, float],
        h_count: int = 1,
        x_count: int = 401,
    ) -> "FunctionClassSpec":
        return cls(
            kind=ClassKind.INDICATOR_WINDOWS,
            h_values=_linspace(h_range, h_count),
            x_values=_linspace(x_range, x_count),
            envelope=1.0,
        )

    @classmethod
    def product(cls, a: "FunctionClassSpec", b: "FunctionClassSpec") -> "FunctionClassSpec":
        return cls(kind=ClassKind.PRODUCT, factors=[a, b])

    @classmethod
    def explicit(cls, functions: list[Any], envelope: float) -> "FunctionClassSpec":
        return cls(kind=ClassKind.EXPLICIT, functions=list(functions), envelope=envelope)

    @property
    def discretization(self) -> tuple[int, int]:
        """(number of h values, number of x values) of the parameter grid."""
        return (len(self.h_values), len(self.x_values))


class RademacherEstimate(BaseModel):
    value: float
    stderr: float
    draws: int
    exhaustive: bool = False


class CoveringCurve(BaseModel):
    """Greedy covering counts and their log-log fit.

    Counts come from a farthest-point net and are upper bounds on the
    minimal covering numbers.
    """

    eps_grid: list[float]
    counts: list[int]
    members: int
    nu: Optional[float] = None
    constant: Optional[float] = None
    nu_stderr: float = 0.0
    r_squared: float = 0.0
    upper_bound: bool = True

    @property
    def fitted(self) -> bool:
        return self.nu is not None


class ProductCoveringCheck(BaseModel):
    predicted: float
    direct: float
    tolerance: float
    within: bool


class MomentBoundRow(BaseModel):
    n: int
    mu_hat: float
    stderr: float
    bound: float
    ratio: float
    envelope_condition: bool
    sigma_admissible: bool


class TailRow(BaseModel):
    t: float
    empirical_prob: float = Field(ge=0.0, le=1.0)
    bound_value: float


class SymmetrizationCheck(BaseModel):
    n: int
    centered: float
    centered_stderr: float
    rademacher: float
    rademacher_stderr: float

    @property
    def holds(self) -> bool:
        return self.centered <= 2.0 * self.rademacher + 4.0 * (
            self.centered_stderr + 2.0 * self.rademacher_stderr
        )


def _linspace(bounds: tuple[float, float], count: int) -> list[float]:
    lo, hi = bounds
    if count < 1:
        raise ValueError("a parameter grid needs at least one value")
    if count == 1:
        return [float(lo)]
    return [float(v) for v in np.linspace(lo, hi, count)]
