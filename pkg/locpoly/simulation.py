"""Known-truth scenarios, seeded sample draws and the Monte Carlo study driver."""

from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

from locpoly.config import StudyConfig
from locpoly.errors import ArgumentError, LocpolyError
from locpoly.kernels import evaluate_on, get_kernel
from locpoly.models import (
    BandwidthGrid,
    GridKind,
    MomentRegime,
    NoiseKind,
    PairedSample,
    RateReport,
    StudyResult,
    SummaryRow,
)
from locpoly.scan import (
    CenterCache,
    TruthModel,
    dyadic_grid,
    explicit_grid,
    interval_grid,
    power_law_grid,
    shrinking_upper,
    uib_scan,
)
from locpoly.workers import map_ordered

logger = logging.getLogger(__name__)

# rng.random() yields multiples of 2**-53 in [0, 1); shifting and clipping keeps them in (0, 1).
_OPEN_SHIFT = 2.0**-54
_OPEN_TOP = 1.0 - 2.0**-53


class NoiseSpec(BaseModel):
    """Additive noise law, sampled through its quantile function."""

    kind: NoiseKind
    bound: float = Field(default=1.0, gt=0.0)
    df: float = Field(default=5.0, gt=2.0)

    @property
    def bounded(self) -> bool:
        return self.kind is NoiseKind.BOUNDED_UNIFORM

    def quantile(self, u: np.ndarray) -> np.ndarray:
        if self.bounded:
            return self.bound * (2.0 * u - 1.0)
        return stats.t.ppf(u, self.df)

    @property
    def label(self) -> str:
        if self.bounded:
            return f"BoundedUniform({self.bound:g})"
        return f"StudentT({self.df:g})"


class Scenario(BaseModel):
    """A design density, regression function and noise law with their interval."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    description: str
    density: Callable
    quantile: Callable
    support: tuple[float, float]
    regression: Callable
    regression_label: str
    noise: NoiseSpec
    interval: tuple[float, float]
    margin: float = Field(gt=0.0, lt=1.0)
    regime: MomentRegime
    pbar: Optional[float] = None

    @model_validator(mode="after")
    def _check_regime(self) -> "Scenario":
        if (self.regime is MomentRegime.MM) != self.noise.bounded:
            raise ValueError("the MM regime requires bounded noise and vice versa")
        if self.regime is MomentRegime.PP:
            if self.pbar is None or self.pbar <= 2:
                raise ValueError("the PP regime needs a moment order pbar > 2")
            if self.noise.df <= self.pbar:
                raise ValueError(f"StudentT({self.noise.df:g}) lacks a finite moment of order {self.pbar:g}")
        lo, hi = self.interval
        j_lo, j_hi = lo - self.margin, hi + self.margin
        if j_lo < self.support[0] or j_hi > self.support[1]:
            raise ValueError("the inflated interval J must lie inside the design support")
        values = evaluate_on(self.density, np.linspace(j_lo, j_hi, 257))
        if np.min(values) <= 0:
            raise ValueError("the design density must be strictly positive on J")
        return self

    @property
    def regime_label(self) -> str:
        if self.regime is MomentRegime.MM:
            return "MM"
        return f"PP({self.pbar:g})"

    @property
    def default_gamma(self) -> float:
        """1 with bounded noise, 1 - 2/pbar under the moment condition."""
        if self.regime is MomentRegime.MM:
            return 1.0
        return 1.0 - 2.0 / float(self.pbar)

    def truth(self) -> TruthModel:
        return TruthModel(density=self.density, regression=self.regression)

    def phi(self, x: np.ndarray) -> np.ndarray:
        """Regression numerator g(x) f_X(x)."""
        return self.truth().numerator()(np.asarray(x, dtype=float))


def _uniform01_density(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0.0) & (x <= 1.0), 1.0, 0.0)


def _uniform01_quantile(u: np.ndarray) -> np.ndarray:
    return np.asarray(u, dtype=float)


def _triangular_density(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.clip(1.0 - np.abs(x - 0.5), 0.0, None)


def _triangular_quantile(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.where(u <= 0.5, -0.5 + np.sqrt(2.0 * u), 1.5 - np.sqrt(2.0 * (1.0 - u)))


def builtin_scenarios() -> list[Scenario]:
    """S1 (bounded noise), S2 (Student-t noise) and S3 (triangular design)."""
    return [
        Scenario(
            name="S1",
            description="X ~ U[0,1], g(x) = sin(2 pi x), bounded uniform noise",
            density=_uniform01_density,
            quantile=_uniform01_quantile,
            support=(0.0, 1.0),
            regression=lambda x: np.sin(2.0 * np.pi * np.asarray(x, dtype=float)),
            regression_label="sin(2 pi x)",
            noise=NoiseSpec(kind=NoiseKind.BOUNDED_UNIFORM, bound=1.0),
            interval=(0.25, 0.75),
            margin=0.25,
            regime=MomentRegime.MM,
        ),
        Scenario(
            name="S2",
            description="X ~ U[0,1], g(x) = x^2, Student-t(5) noise",
            density=_uniform01_density,
            quantile=_uniform01_quantile,
            support=(0.0, 1.0),
            regression=lambda x: np.asarray(x, dtype=float) ** 2,
            regression_label="x^2",
            noise=NoiseSpec(kind=NoiseKind.STUDENT_T, df=5.0),
            interval=(0.25, 0.75),
            margin=0.25,
            regime=MomentRegime.PP,
            pbar=4.0,
        ),
        Scenario(
            name="S3",
            description="triangular X on [-0.5,1.5] peaked at 0.5, g(x) = 2x + 1",
            density=_triangular_density,
            quantile=_triangular_quantile,
            support=(-0.5, 1.5),
            regression=lambda x: 2.0 * np.asarray(x, dtype=float) + 1.0,
            regression_label="2x + 1",
            noise=NoiseSpec(kind=NoiseKind.BOUNDED_UNIFORM, bound=0.5),
            interval=(0.1, 0.9),
            margin=0.1,
            regime=MomentRegime.MM,
        ),
    ]


SCENARIO_NAMES = ("S1", "S2", "S3")


def get_scenario(name: str) -> Scenario:
    for scenario in builtin_scenarios():
        if scenario.name.lower() == name.strip().lower():
            return scenario
    raise ArgumentError(f"unknown scenario {name!r}; choose one of {', '.join(SCENARIO_NAMES)}")


# ---------------------------------------------------------------------- #
# Replication
# ---------------------------------------------------------------------- #


class ReplicationPlan(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    master_seed: int = Field(ge=0, lt=2**64)
    replicates: int = Field(ge=1)
    sample_sizes: list[int]
    scenario: Scenario

    @field_validator("sample_sizes")
    @classmethod
    def _sizes(cls, sizes: list[int]) -> list[int]:
        if not sizes or any(n < 1 for n in sizes):
            raise ValueError("sample sizes must be positive")
        return sizes

    @classmethod
    def from_config(cls, config: StudyConfig) -> "ReplicationPlan":
        return cls(
            master_seed=config.master_seed,
            replicates=config.replicates,
            sample_sizes=config.sample_sizes,
            scenario=get_scenario(config.scenario),
        )


def substream(master_seed: int, replicate: int, n: int) -> np.random.Generator:
    """Generator owned by one (replicate, n) cell of a plan."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate, n))
    )


def draw_sample(
    plan: ReplicationPlan, replicate: int, n: int, noiseless: bool = False
) -> PairedSample:
    """n i.i.d. pairs from the plan's scenario, fixed by (master_seed, replicate, n).

    Every observation consumes exactly two uniforms, one for X and one for
    the noise, also when *noiseless* is set.
    """
    if not 0 <= replicate < plan.replicates:
        raise ArgumentError(f"replicate {replicate} outside 0..{plan.replicates - 1}")
    if n not in plan.sample_sizes:
        raise ArgumentError(f"n={n} is not one of the plan's sample sizes")

    scenario = plan.scenario
    raw = substream(plan.master_seed, replicate, n).random((n, 2))
    uniforms = np.clip(raw + _OPEN_SHIFT, _OPEN_SHIFT, _OPEN_TOP)
    xs = evaluate_on(scenario.quantile, uniforms[:, 0])
    ys = evaluate_on(scenario.regression, xs)
    if not noiseless:
        ys = ys + scenario.noise.quantile(uniforms[:, 1])
    return PairedSample(xs=xs, ys=ys, interval=scenario.interval, margin=scenario.margin)


def gamma_convention(gamma: float, scenario: Scenario) -> str:
    """Tag which bandwidth-floor convention a gamma corresponds to."""
    if math.isclose(gamma, 1.0):
        return "bounded"
    if scenario.pbar is not None and math.isclose(gamma, 1.0 - 2.0 / scenario.pbar):
        return "moment"
    if gamma > 1.0:
        return "sub_log"
    return "explicit"


def study_grid(config: StudyConfig, n: int) -> BandwidthGrid:
    """Bandwidth grid for one sample size, honoring an optional shrinking upper end."""
    if config.grid is GridKind.EXPLICIT:
        return explicit_grid(config.hs, n)
    h0 = config.h0
    if config.bn_scale is not None:
        h0 = min(h0, shrinking_upper(n, config.bn_scale, config.bn_exponent) / 2.0)
    if config.grid is GridKind.DYADIC and math.isclose(config.gamma, 1.0):
        return dyadic_grid(config.c, n, h0)
    return power_law_grid(config.c, n, h0, config.gamma)


def _regime_flags(config: StudyConfig, scenario: Scenario) -> list[str]:
    flags: list[str] = []
    if (
        scenario.regime is MomentRegime.PP
        and config.grid is not GridKind.EXPLICIT
        and math.isclose(config.gamma, 1.0)
    ):
        flags.append(
            f"{scenario.name} is in the {scenario.regime_label} regime but runs with the "
            f"bounded-noise floor c*log(n)/n; the moment regime calls for "
            f"gamma = {scenario.default_gamma:g}"
        )
    return flags


def _summarize(n: int, reports: list[RateReport]) -> SummaryRow:
    values = np.array([r.overall_rate_stat for r in reports], dtype=float)
    p10, median, p90, p99 = np.percentile(values, [10, 50, 90, 99])
    return SummaryRow(
        n=n,
        replicates=len(reports),
        p10=float(p10),
        median=float(median),
        p90=float(p90),
        p99=float(p99),
        maximum=float(values.max()),
        mean_sup_dev=float(np.mean([r.sup_over_h for r in reports])),
    )


def run_study(
    plan: ReplicationPlan, config: StudyConfig, workers: Optional[int] = None
) -> StudyResult:
    """One RateReport per (n, replicate), plus per-n percentile summaries.

    Replicates run in parallel; reports come back ordered by n, then
    replicate. A failing replicate is recorded and the study continues.
    """
    scenario = plan.scenario
    kernel = get_kernel(config.kernel)
    target = config.scan_target
    xgrid = interval_grid(scenario.interval, config.xgrid_points)
    centers = CenterCache(target, config.centering, kernel, scenario.truth())
    flags = _regime_flags(config, scenario)
    for flag in flags:
        logger.warning(flag)

    jobs = [(n, r) for n in plan.sample_sizes for r in range(plan.replicates)]

    def _job(job: tuple[int, int]) -> Union[RateReport, str]:
        n, replicate = job
        try:
            sample = draw_sample(plan, replicate, n)
            return uib_scan(
                sample,
                kernel,
                study_grid(config, n),
                target,
                config.centering,
                xgrid=xgrid,
                centers=centers,
                workers=1,
                seed=plan.master_seed,
                replicate=replicate,
            )
        except LocpolyError as exc:
            logger.warning("Replicate %d at n=%d failed: %s", replicate, n, exc)
            return f"n={n} replicate={replicate}: {exc}"

    outcomes = map_ordered(_job, jobs, workers)
    reports = [o for o in outcomes if isinstance(o, RateReport)]
    failures = [o for o in outcomes if isinstance(o, str)]

    summary = []
    for n in plan.sample_sizes:
        at_n = [r for r in reports if r.n == n]
        if at_n:
            summary.append(_summarize(n, at_n))

    return StudyResult(
        reports=reports,
        summary=summary,
        failures=failures,
        flags=flags,
        gamma_convention=gamma_convention(config.gamma, scenario),
    )
