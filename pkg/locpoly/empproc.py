"""Desk-scale checks of empirical-process bounds on discretized function classes.

A class is materialized as a (members x points) matrix. Rademacher
moments, greedy covering numbers, the moment bound ratio and the tail
frequency check all work on that matrix.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats

from locpoly.errors import ArgumentError, DegenerateMetricError, PreconditionError
from locpoly.kernels import evaluate_on, get_kernel, transformed
from locpoly.models import (
    ClassKind,
    CoveringCurve,
    FunctionClassSpec,
    MomentBoundRow,
    PairedSample,
    ProductCoveringCheck,
    RademacherEstimate,
    SymmetrizationCheck,
    TailRow,
)
from locpoly.simulation import ReplicationPlan, Scenario, draw_sample
from locpoly.workers import map_ordered

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 20
SIGN_CHUNK = 256
MEAN_NODES = 8193
# Covering-number convention for VC-type classes: C >= e and nu >= 1.
MIN_COVERING_CONSTANT = math.e
MIN_COVERING_EXPONENT = 1.0


def _points(sample: PairedSample | np.ndarray | Sequence[float]) -> np.ndarray:
    xs = sample.xs if isinstance(sample, PairedSample) else np.asarray(sample, dtype=float)
    if xs.ndim != 1 or xs.size == 0:
        raise ArgumentError("a nonempty one-dimensional sample is required")
    return xs


def materialize(spec: FunctionClassSpec, points: np.ndarray) -> np.ndarray:
    """Values of every class member at *points*, one row per member."""
    points = np.asarray(points, dtype=float)
    if spec.kind is ClassKind.KERNEL_TRANSLATES:
        tk = transformed(get_kernel(spec.kernel), spec.order)
        centers = np.asarray(spec.x_values)[:, None]
        rows = [tk((centers - points[None, :]) / h) for h in spec.h_values]
        return np.vstack(rows)
    if spec.kind is ClassKind.INDICATOR_WINDOWS:
        centers = np.asarray(spec.x_values)[:, None]
        rows = [(np.abs(centers - points[None, :]) <= h / 2).astype(float) for h in spec.h_values]
        return np.vstack(rows)
    if spec.kind is ClassKind.PRODUCT:
        a = materialize(spec.factors[0], points)
        b = materialize(spec.factors[1], points)
        return (a[:, None, :] * b[None, :, :]).reshape(-1, points.size)
    if not spec.functions:
        raise ArgumentError("the function class is empty")
    return np.vstack([evaluate_on(fn, points) for fn in spec.functions])


def class_envelope(spec: FunctionClassSpec) -> float:
    """Uniform bound on the sup-norm of every member."""
    if spec.envelope is not None:
        return spec.envelope
    if spec.kind is ClassKind.KERNEL_TRANSLATES:
        return transformed(get_kernel(spec.kernel), spec.order).bound
    if spec.kind is ClassKind.PRODUCT:
        return class_envelope(spec.factors[0]) * class_envelope(spec.factors[1])
    return 1.0


def class_moments(spec: FunctionClassSpec, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """(E g(X), E g(X)^2) for every member under the scenario's design density."""
    lo, hi = scenario.support
    grid = np.linspace(lo, hi, MEAN_NODES)
    weights = evaluate_on(scenario.density, grid)
    values = materialize(spec, grid)
    means = integrate.simpson(values * weights, x=grid, axis=1)
    second = integrate.simpson(values**2 * weights, x=grid, axis=1)
    return means, second


def _sign_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _signs(rng: np.random.Generator, rows: int, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=(rows, n)).astype(float) * 2.0 - 1.0


def _sup_abs(signs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """sup over members of |sum_i eps_i g(X_i)|, one entry per sign vector."""
    return np.max(np.abs(signs @ values.T), axis=1)


# ---------------------------------------------------------------------- #
# Rademacher moments
# ---------------------------------------------------------------------- #


def rademacher_moment(
    spec: FunctionClassSpec,
    sample: PairedSample | np.ndarray | Sequence[float],
    draws: int,
    seed: int,
    exhaustive: bool = False,
    workers: Optional[int] = None,
) -> RademacherEstimate:
    """E sup_g |sum eps_i g(X_i)| given the sample, by Monte Carlo over signs.

    With *exhaustive* set and n <= 20 every sign pattern is enumerated and
    the value is exact.
    """
    if draws < 1:
        raise ArgumentError("at least one sign draw is required")
    xs = _points(sample)
    values = materialize(spec, xs)
    if values.shape[0] == 0:
        raise ArgumentError("the function class is empty")
    n = xs.size

    if exhaustive:
        if n > EXHAUSTIVE_LIMIT:
            raise ArgumentError(f"exhaustive enumeration needs n <= {EXHAUSTIVE_LIMIT}, got {n}")
        patterns = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
        sups = _sup_abs(patterns.astype(float) * 2.0 - 1.0, values)
        return RademacherEstimate(
            value=float(sups.mean()), stderr=0.0, draws=2**n, exhaustive=True
        )

    chunks = [
        (k, min(SIGN_CHUNK, draws - k * SIGN_CHUNK))
        for k in range(math.ceil(draws / SIGN_CHUNK))
    ]

    def _chunk(item: tuple[int, int]) -> np.ndarray:
        index, rows = item
        return _sup_abs(_signs(_sign_rng(seed, index), rows, n), values)

    sups = np.concatenate(map_ordered(_chunk, chunks, workers))
    stderr = float(sups.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return RademacherEstimate(value=float(sups.mean()), stderr=stderr, draws=draws)


# ---------------------------------------------------------------------- #
# Covering numbers
# ---------------------------------------------------------------------- #


def _greedy_radii(values: np.ndarray, norm: float, smallest_eps: float) -> list[float]:
    """Covering radius after each farthest-point center is added."""
    def distances(index: int) -> np.ndarray:
        return np.sqrt(np.mean((values - values[index]) ** 2, axis=1)) / norm

    nearest = distances(0)
    radii = [float(nearest.max())]
    while radii[-1] > smallest_eps and len(radii) < values.shape[0]:
        nearest = np.minimum(nearest, distances(int(np.argmax(nearest))))
        radii.append(float(nearest.max()))
    return radii


def covering_estimate(
    spec: FunctionClassSpec,
    measure_sample: PairedSample | np.ndarray | Sequence[float],
    eps_grid: Sequence[float],
) -> CoveringCurve:
    """Greedy covering counts in the L2(Q_n) metric normalized by the envelope.

    Counts come from one farthest-point traversal, so they are monotone in
    eps and bound the minimal covering numbers from above. nu and C are
    fitted by least squares of log N on log(1/eps).
    """
    xs = _points(measure_sample)
    eps = sorted((float(e) for e in eps_grid), reverse=True)
    if not eps or any(not 0 < e < 1 for e in eps):
        raise ArgumentError("eps values must lie in (0, 1)")

    norm = class_envelope(spec)
    if not norm > 0:
        raise DegenerateMetricError("the class envelope has zero norm under the sample")
    values = materialize(spec, xs)
    radii = _greedy_radii(values, norm, eps[-1])
    counts = [next(k + 1 for k, r in enumerate(radii) if r <= e) for e in eps]
    logger.debug("Greedy counts %s over eps %s", counts, eps)

    curve = CoveringCurve(eps_grid=eps, counts=counts, members=values.shape[0])
    if len(eps) < 2:
        return curve
    if len(set(counts)) == 1:
        return curve.model_copy(update={"nu": 0.0, "constant": float(counts[0]), "r_squared": 1.0})
    fit = stats.linregress(np.log(1.0 / np.array(eps)), np.log(np.array(counts, dtype=float)))
    return curve.model_copy(
        update={
            "nu": float(fit.slope),
            "constant": float(math.exp(fit.intercept)),
            "nu_stderr": float(fit.stderr),
            "r_squared": float(fit.rvalue**2),
        }
    )


def product_class_covering(a: CoveringCurve, b: CoveringCurve) -> float:
    """Predicted exponent of the product class, nu_a + nu_b."""
    if not (a.fitted and b.fitted):
        raise ArgumentError("both covering curves must be fitted")
    return float(a.nu) + float(b.nu)


def product_covering_check(
    a: FunctionClassSpec,
    b: FunctionClassSpec,
    measure_sample: PairedSample | np.ndarray | Sequence[float],
    eps_grid: Sequence[float],
) -> ProductCoveringCheck:
    """Compare a direct fit on the product class with nu_a + nu_b."""
    predicted = product_class_covering(
        covering_estimate(a, measure_sample, eps_grid),
        covering_estimate(b, measure_sample, eps_grid),
    )
    direct = covering_estimate(FunctionClassSpec.product(a, b), measure_sample, eps_grid)
    if not direct.fitted:
        raise ArgumentError("the product class fit needs at least two eps values")
    tolerance = 3.0 * direct.nu_stderr
    return ProductCoveringCheck(
        predicted=predicted,
        direct=float(direct.nu),
        tolerance=tolerance,
        within=float(direct.nu) <= predicted + tolerance,
    )


# ---------------------------------------------------------------------- #
# Moment bound, symmetrization and tail checks
# ---------------------------------------------------------------------- #


def _plan(scenario: Scenario, seed: int, replicates: int, sizes: list[int]) -> ReplicationPlan:
    return ReplicationPlan(
        master_seed=seed, replicates=replicates, sample_sizes=sizes, scenario=scenario
    )


def moment_bound_check(
    spec: FunctionClassSpec,
    scenario: Scenario,
    sample_sizes: Sequence[int],
    sigma: float,
    seed: int,
    draws: int = 256,
    eps_grid: Sequence[float] = (0.4, 0.2, 0.1, 0.05),
    workers: Optional[int] = None,
) -> list[MomentBoundRow]:
    """mu_n against sqrt(nu n sigma^2 log(beta v 1/sigma)) for each n.

    beta is the class envelope, nu and C come from a greedy covering fit on
    the largest sample. Raises PreconditionError when an empirical second
    moment exceeds sigma^2.
    """
    if draws < 1:
        raise ArgumentError("at least one sign draw is required")
    if not 0 < sigma <= 1:
        raise ArgumentError(f"sigma must lie in (0, 1], got {sigma}")
    sizes = sorted(int(n) for n in sample_sizes)
    if not sizes:
        raise ArgumentError("no sample sizes given")

    beta = class_envelope(spec)
    log_term = math.log(max(beta, 1.0 / sigma))
    if not log_term > 0:
        raise ArgumentError("log(beta v 1/sigma) must be positive")

    plan = _plan(scenario, seed, 1, sizes)
    samples = {n: draw_sample(plan, 0, n).xs for n in sizes}
    curve = covering_estimate(spec, samples[sizes[-1]], eps_grid)
    nu = max(curve.nu or 0.0, MIN_COVERING_EXPONENT)
    constant = max(curve.constant or 0.0, MIN_COVERING_CONSTANT)
    sigma_admissible = sigma <= 1.0 / (8.0 * constant)

    rows: list[MomentBoundRow] = []
    for n in sizes:
        values = materialize(spec, samples[n])
        second = float(np.max(np.mean(values**2, axis=1)))
        if second > sigma**2:
            raise PreconditionError(
                "second-moment bound",
                f"sup of empirical second moments {second:.4g} exceeds sigma^2 = {sigma**2:.4g} at n={n}",
            )
        estimate = rademacher_moment(spec, samples[n], draws, seed + n, workers=workers)
        bound = math.sqrt(nu * n * sigma**2 * log_term)
        envelope_condition = beta <= (
            math.sqrt(n * sigma**2 / log_term) / (2.0 * math.sqrt(nu + 1.0))
        )
        rows.append(
            MomentBoundRow(
                n=n,
                mu_hat=estimate.value,
                stderr=estimate.stderr,
                bound=bound,
                ratio=estimate.value / bound,
                envelope_condition=envelope_condition,
                sigma_admissible=sigma_admissible,
            )
        )
    return rows


def _centered_and_signed(
    spec: FunctionClassSpec,
    plan: ReplicationPlan,
    n: int,
    means: np.ndarray,
    workers: Optional[int],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per replicate: sup |sum (g - Eg)|, max over m <= n of it, and one signed sup."""

    def _replicate(r: int) -> tuple[float, float, float]:
        values = materialize(spec, draw_sample(plan, r, n).xs)
        partial = np.cumsum(values - means[:, None], axis=1)
        signs = _signs(_sign_rng(plan.master_seed, r, n, 1), 1, n)
        return (
            float(np.max(np.abs(partial[:, -1]))),
            float(np.max(np.abs(partial))),
            float(_sup_abs(signs, values)[0]),
        )

    results = np.array(map_ordered(_replicate, range(plan.replicates), workers))
    return results[:, 0], results[:, 1], results[:, 2]


def symmetrization_check(
    spec: FunctionClassSpec,
    scenario: Scenario,
    n: int,
    draws: int,
    seed: int,
    workers: Optional[int] = None,
) -> SymmetrizationCheck:
    """Monte Carlo values of E sup|sum (g - Eg)| and E sup|sum eps g| over fresh samples."""
    if draws < 2:
        raise ArgumentError("symmetrization needs at least two draws")
    means, _ = class_moments(spec, scenario)
    centered, _, signed = _centered_and_signed(
        spec, _plan(scenario, seed, draws, [n]), n, means, workers
    )
    root = math.sqrt(draws)
    return SymmetrizationCheck(
        n=n,
        centered=float(centered.mean()),
        centered_stderr=float(centered.std(ddof=1) / root),
        rademacher=float(signed.mean()),
        rademacher_stderr=float(signed.std(ddof=1) / root),
    )


def _gaussian_tail(t: float, n: int, sigma: float) -> float:
    if t == 0:
        return 1.0
    if sigma == 0:
        return 0.0
    return math.exp(-(t**2) / (n * sigma**2))


def talagrand_tail_check(
    spec: FunctionClassSpec,
    scenario: Scenario,
    n: int,
    t_grid: Sequence[float],
    replicates: int,
    seed: int,
    sigma: Optional[float] = None,
    workers: Optional[int] = None,
) -> list[TailRow]:
    """Exceedance frequency of max_m sup_g |sum_{i<=m} (g - Eg)| over mu_n + t.

    Reported next to 2(exp(-t^2/(n sigma^2)) + exp(-t/M)) with both
    constants set to 1. sigma defaults to the root of the largest variance
    in the class; M is the envelope. A zero sigma drops the Gaussian term
    for t > 0.
    """
    if replicates < 100:
        raise ArgumentError(f"the tail check needs at least 100 replicates, got {replicates}")
    if any(t < 0 for t in t_grid):
        raise ArgumentError("t values must be nonnegative")
    means, second = class_moments(spec, scenario)
    if sigma is None:
        sigma = math.sqrt(max(float(np.max(second - means**2)), 0.0))
    if sigma < 0:
        raise ArgumentError("sigma must be nonnegative")
    envelope = class_envelope(spec)
    if not envelope > 0:
        raise ArgumentError("the class envelope must be positive")

    _, running_max, signed = _centered_and_signed(
        spec, _plan(scenario, seed, replicates, [n]), n, means, workers
    )
    mu_hat = float(signed.mean())

    rows = []
    for t in t_grid:
        frequency = float(np.mean(running_max >= mu_hat + t))
        bound = 2.0 * (_gaussian_tail(t, n, sigma) + math.exp(-t / envelope))
        rows.append(TailRow(t=float(t), empirical_prob=frequency, bound_value=bound))
    return rows
