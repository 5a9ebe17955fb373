"""Tests for the sample-based estimators and the local polynomial fit."""

import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy import integrate

from locpoly.errors import ArgumentError, EmptyWindowError, SingularDesignError
from locpoly.estimators import (
    clipped,
    closed_form_fit,
    conditional_ecdf,
    ftilde_value,
    identity,
    indicator,
    kde,
    local_poly_fit,
    moment_stats,
    nadaraya_watson,
    parse_psi,
    raw_design_matrix,
    regression_curve,
    rtilde_value,
    scaled_design_matrix,
)
from locpoly.kernels import get_kernel
from locpoly.models import PairedSample


def make_sample(xs, ys=None, interval=(0.0, 1.0), margin=0.1):
    return PairedSample(xs=xs, ys=ys, interval=interval, margin=margin)


@pytest.fixture(scope="module")
def uniform():
    return get_kernel("uniform")


@pytest.fixture(scope="module")
def epanechnikov():
    return get_kernel("epanechnikov")


@pytest.fixture
def pair():
    return make_sample([0.4, 0.6], [1.0, 3.0])


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(20240611)


class TestKDE:
    def test_single_point(self, uniform):
        assert kde(make_sample([0.5]), uniform, 0.2, 0.5) == pytest.approx(5.0)

    def test_far_from_sample(self, uniform):
        assert kde(make_sample([0.1, 0.2, 0.9]), uniform, 0.1, 0.5) == 0.0

    def test_two_points(self, uniform, pair):
        assert kde(pair, uniform, 0.5, 0.5) == pytest.approx(2.0)

    def test_array_input(self, uniform, pair):
        values = kde(pair, uniform, 0.5, np.array([0.5, 0.5]))
        assert values.tolist() == pytest.approx([2.0, 2.0])

    def test_bad_bandwidth(self, uniform, pair):
        with pytest.raises(ArgumentError):
            kde(pair, uniform, 0.0, 0.5)

    def test_integrates_to_one(self, rng):
        kernel = get_kernel("triangular")
        sample = make_sample(rng.uniform(0.2, 0.8, size=20))
        grid = np.linspace(0.1, 0.9, 20001)
        values = kde(sample, kernel, 0.1, grid)
        assert integrate.trapezoid(values, x=grid) == pytest.approx(1.0, abs=1e-6)

    def test_two_dimensional(self, uniform):
        sample = PairedSample(
            xs=np.array([[0.5, 0.5], [0.9, 0.9]]), interval=(0.0, 1.0), margin=0.1
        )
        # h = 0.04 gives a window of side h^(1/2) = 0.2
        assert kde(sample, uniform, 0.04, np.array([0.5, 0.5])) == pytest.approx(1 / (2 * 0.04))


class TestNadarayaWatson:
    def test_constant_response(self, epanechnikov, rng):
        xs = rng.uniform(0, 1, size=30)
        sample = make_sample(xs, np.full(30, 4.5))
        assert nadaraya_watson(sample, epanechnikov, 0.4, 0.5) == pytest.approx(4.5)

    def test_two_points(self, uniform):
        sample = make_sample([0.45, 0.55], [1.0, 3.0])
        assert nadaraya_watson(sample, uniform, 0.3, 0.5) == pytest.approx(2.0)

    def test_indicator_below_min(self, uniform):
        sample = make_sample([0.45, 0.55], [1.0, 3.0])
        assert nadaraya_watson(sample, uniform, 0.3, 0.5, indicator(0.5)) == 0.0

    def test_empty_window(self, uniform):
        sample = make_sample([0.1, 0.2], [1.0, 2.0])
        with pytest.raises(EmptyWindowError):
            nadaraya_watson(sample, uniform, 0.1, 0.8)

    def test_needs_response(self, uniform):
        with pytest.raises(ArgumentError):
            nadaraya_watson(make_sample([0.5]), uniform, 0.2, 0.5)

    def test_window_boundary_included(self, uniform):
        sample = make_sample([0.25, 0.75], [1.0, 5.0])
        assert nadaraya_watson(sample, uniform, 0.5, 0.5) == pytest.approx(3.0)


class TestResponseTransforms:
    def test_parse(self):
        assert parse_psi("identity") is identity
        assert parse_psi("indicator:1.5")(np.array([1.0, 2.0])).tolist() == [1.0, 0.0]
        assert parse_psi("clip:2")(np.array([-5.0, 1.0, 5.0])).tolist() == [-2.0, 1.0, 2.0]

    def test_parse_unknown(self):
        with pytest.raises(ArgumentError):
            parse_psi("square")

    def test_clip_level(self):
        with pytest.raises(ArgumentError):
            clipped(0.0)


class TestConditionalECDF:
    def test_examples(self, uniform):
        sample = make_sample([0.45, 0.55], [1.0, 3.0])
        assert conditional_ecdf(sample, uniform, 0.3, 0.5, 3.0) == 1.0
        assert conditional_ecdf(sample, uniform, 0.3, 0.5, 0.9) == 0.0
        assert conditional_ecdf(sample, uniform, 0.3, 0.5, 2.0) == pytest.approx(0.5)

    def test_monotone_and_bounded(self, epanechnikov, rng):
        for _ in range(100):
            xs = rng.uniform(0, 1, size=40)
            sample = make_sample(xs, rng.normal(size=40))
            x0 = rng.uniform(0.3, 0.7)
            try:
                values = [
                    conditional_ecdf(sample, epanechnikov, 0.4, x0, t)
                    for t in np.linspace(-4, 4, 41)
                ]
            except EmptyWindowError:
                continue
            assert all(0.0 <= v <= 1.0 for v in values)
            assert all(b >= a for a, b in zip(values, values[1:]))
            window_ys = sample.ys[np.abs(sample.xs - x0) < 0.2]
            assert conditional_ecdf(sample, epanechnikov, 0.4, x0, window_ys.max()) == pytest.approx(1.0)
            assert conditional_ecdf(sample, epanechnikov, 0.4, x0, window_ys.min() - 1) == 0.0


class TestMomentStats:
    def test_two_point_row(self, uniform, pair):
        stats = moment_stats(pair, uniform, 0.5, 0.5, 1)
        assert stats.ftilde == pytest.approx([2.0, 0.0, 0.08])
        assert stats.rtilde == pytest.approx([4.0, 0.4])

    def test_ftilde_zero_is_kde(self, epanechnikov, rng):
        sample = make_sample(rng.uniform(size=50), rng.uniform(size=50))
        stats = moment_stats(sample, epanechnikov, 0.3, 0.42, 2)
        assert stats.ftilde[0] == pytest.approx(kde(sample, epanechnikov, 0.3, 0.42))

    def test_point_at_x0(self, uniform):
        sample = make_sample([0.5], [2.0])
        stats = moment_stats(sample, uniform, 0.2, 0.5, 2)
        assert stats.ftilde[1:] == [0.0, 0.0, 0.0, 0.0]

    def test_empty_window_is_zero(self, uniform):
        sample = make_sample([0.1], [2.0])
        stats = moment_stats(sample, uniform, 0.1, 0.9, 1)
        assert stats.ftilde == [0.0, 0.0, 0.0]
        assert stats.rtilde == [0.0, 0.0]

    def test_single_values(self, uniform, pair):
        assert ftilde_value(pair, uniform, 0.5, 0.5, 2) == pytest.approx(0.08)
        assert rtilde_value(pair, uniform, 0.5, 0.5, 1) == pytest.approx(0.4)


class TestLocalPolyFit:
    def test_line_reproduction(self, uniform, rng):
        xs = rng.uniform(0, 1, size=40)
        sample = make_sample(xs, 2 * xs + 1)
        fit = local_poly_fit(sample, uniform, 0.3, 0.55, 1)
        assert fit.beta == pytest.approx([2.1, 2.0], abs=1e-10)
        assert fit.derivative(1) == pytest.approx(2.0)

    def test_p0_is_nadaraya_watson(self, epanechnikov, rng):
        xs = rng.uniform(0, 1, size=40)
        sample = make_sample(xs, np.sin(xs) + rng.normal(scale=0.1, size=40))
        fit = local_poly_fit(sample, epanechnikov, 0.25, 0.5, 0)
        assert fit.estimate == pytest.approx(nadaraya_watson(sample, epanechnikov, 0.25, 0.5))

    def test_p2_matches_closed_form(self, uniform, rng):
        xs = rng.uniform(0, 1, size=50)
        sample = make_sample(xs, np.cos(3 * xs) + rng.normal(scale=0.2, size=50))
        fit = local_poly_fit(sample, uniform, 0.3, 0.5, 2)
        stats = moment_stats(sample, uniform, 0.3, 0.5, 2)
        assert closed_form_fit(stats, 2) == pytest.approx(fit.estimate, rel=1e-10)

    def test_empty_window(self, uniform):
        sample = make_sample([0.1, 0.15], [1.0, 2.0])
        with pytest.raises(EmptyWindowError):
            local_poly_fit(sample, uniform, 0.1, 0.8, 1)

    def test_too_few_points_is_singular(self, uniform):
        sample = make_sample([0.5, 0.52], [1.0, 2.0])
        with pytest.raises(SingularDesignError):
            local_poly_fit(sample, uniform, 0.2, 0.5, 2)

    def test_n_in_window(self, uniform):
        sample = make_sample([0.1, 0.45, 0.5, 0.55], [0.0, 1.0, 1.0, 1.0])
        assert local_poly_fit(sample, uniform, 0.2, 0.5, 0).n_in_window == 3

    def test_signed_kernel_rejected(self, rng):
        from locpoly.kernels import Kernel

        signed = Kernel.custom(lambda u: 2.25 - 15.0 * u**2, name="signed")
        sample = make_sample([0.5], [1.0])
        with pytest.raises(ArgumentError):
            local_poly_fit(sample, signed, 0.2, 0.5, 0)

    @pytest.mark.parametrize("p", [0, 1, 2, 3])
    def test_polynomial_reproduction(self, p, uniform, rng):
        for _ in range(200):
            xs = rng.uniform(0, 1, size=60)
            q = Polynomial(rng.uniform(-1, 1, size=p + 1))
            sample = make_sample(xs, q(xs))
            x0 = float(rng.uniform(0.3, 0.7))
            h = float(rng.uniform(0.3, 0.6))
            try:
                fit = local_poly_fit(sample, uniform, h, x0, p)
            except SingularDesignError:
                continue
            taylor = q(Polynomial([x0, 1.0])).coef
            taylor = np.pad(taylor, (0, p + 1 - taylor.size))
            for k in range(p + 1):
                assert abs(fit.beta[k] - taylor[k]) <= 1e-9 * (1 + abs(taylor[k]))


class TestClosedForm:
    def test_p0(self):
        from locpoly.models import MomentStats

        stats = MomentStats(x0=0.5, h=0.5, ftilde=[2.0], rtilde=[4.0])
        assert closed_form_fit(stats, 0) == pytest.approx(2.0)

    def test_p1_symmetric_window(self, uniform, pair):
        stats = moment_stats(pair, uniform, 0.5, 0.5, 1)
        assert closed_form_fit(stats, 1) == pytest.approx(2.0)

    def test_unsupported_degree(self, uniform, pair):
        with pytest.raises(ArgumentError):
            closed_form_fit(moment_stats(pair, uniform, 0.5, 0.5, 3), 3)

    def test_vanishing_denominator(self):
        from locpoly.models import MomentStats

        stats = MomentStats(x0=0.5, h=0.1, ftilde=[1.0, 1.0, 1.0], rtilde=[1.0, 1.0])
        with pytest.raises(SingularDesignError):
            closed_form_fit(stats, 1)

    @pytest.mark.parametrize("p", [0, 1, 2])
    def test_agrees_with_solver(self, p, epanechnikov, rng):
        checked = 0
        for _ in range(1000):
            n = int(rng.integers(20, 80))
            xs = rng.uniform(0, 1, size=n)
            sample = make_sample(xs, rng.normal(size=n))
            h = float(rng.uniform(0.15, 0.6))
            x0 = float(rng.uniform(0.2, 0.8))
            try:
                fit = local_poly_fit(sample, epanechnikov, h, x0, p)
            except (EmptyWindowError, SingularDesignError):
                continue
            if fit.cond_A >= 1e6:
                continue
            stats = moment_stats(sample, epanechnikov, h, x0, p)
            closed = closed_form_fit(stats, p)
            assert closed == pytest.approx(fit.estimate, rel=1e-10, abs=1e-12)
            checked += 1
        assert checked > 200


class TestDesignMatrices:
    @pytest.mark.parametrize("p", [0, 1, 2, 3])
    def test_determinant_identity(self, p, uniform, rng):
        for _ in range(25):
            n = 60
            xs = rng.uniform(0, 1, size=n)
            sample = make_sample(xs, rng.normal(size=n))
            h = float(rng.uniform(0.3, 0.6))
            x0 = float(rng.uniform(0.3, 0.7))
            raw = raw_design_matrix(sample, uniform, h, x0, p) / (n * h)
            scaled = scaled_design_matrix(moment_stats(sample, uniform, h, x0, p).ftilde, p)
            expected = h ** (p * (p + 1)) * np.linalg.det(scaled)
            assert np.linalg.det(raw) == pytest.approx(expected, rel=1e-8)

    def test_hankel_layout(self):
        a = scaled_design_matrix([1.0, 2.0, 3.0, 4.0, 5.0], 2)
        assert a.tolist() == [[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]]


class TestEquivariance:
    def test_shift(self, epanechnikov, rng):
        xs = rng.uniform(0, 1, size=40)
        ys = rng.normal(size=40)
        c = 0.37
        base = make_sample(xs, ys)
        moved = make_sample(xs + c, ys, interval=(c, 1.0 + c))
        assert kde(moved, epanechnikov, 0.3, 0.5 + c) == pytest.approx(
            kde(base, epanechnikov, 0.3, 0.5), abs=1e-12
        )
        assert nadaraya_watson(moved, epanechnikov, 0.3, 0.5 + c) == pytest.approx(
            nadaraya_watson(base, epanechnikov, 0.3, 0.5), abs=1e-12
        )
        assert local_poly_fit(moved, epanechnikov, 0.3, 0.5 + c, 1).estimate == pytest.approx(
            local_poly_fit(base, epanechnikov, 0.3, 0.5, 1).estimate, abs=1e-10
        )


class TestRegressionCurve:
    def test_empty_grid(self, uniform, pair):
        assert regression_curve(pair, uniform, 0.3, 0, []) == []

    def test_quadratic_reproduction(self, uniform, rng):
        xs = rng.uniform(0, 1, size=80)
        sample = make_sample(xs, 3 * xs**2 - xs + 0.5)
        curve = regression_curve(sample, uniform, 0.4, 2, [0.3, 0.5, 0.7])
        for point in curve:
            truth = 3 * point.x0**2 - point.x0 + 0.5
            assert point.status == "ok"
            assert point.fit.estimate == pytest.approx(truth, abs=1e-10)

    def test_gap_marker(self, uniform):
        xs = np.concatenate([np.linspace(0.0, 0.3, 20), np.linspace(0.7, 1.0, 20)])
        sample = make_sample(xs, xs)
        curve = regression_curve(sample, uniform, 0.1, 1, [0.2, 0.5, 0.8], workers=2)
        assert [p.status for p in curve] == ["ok", "empty_window", "ok"]
        assert curve[1].fit is None

    def test_outside_interval(self, uniform, pair):
        with pytest.raises(ArgumentError):
            regression_curve(pair, uniform, 0.3, 0, [1.5])

    def test_derivative_order_checked(self, uniform, rng):
        xs = rng.uniform(0, 1, size=30)
        fit = local_poly_fit(make_sample(xs, xs), uniform, 0.4, 0.5, 1)
        with pytest.raises(ValueError):
            fit.derivative(2)
        assert math.isfinite(fit.cond_A)
