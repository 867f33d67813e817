"""Tests for the fidelity test function, its extrema, and moment constants."""

import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from cvqkd.testfn import (
    FockDiagonal,
    TestFunction,
    compute_extrema,
    eval_lambda,
    expectation_lambda_fock,
    expectation_lambda_quad,
    laguerre,
    moment_constant,
)

mp.mp.dps = 40


def laguerre_series(n, k, x):
    """Closed-form series oracle in extended precision."""
    total = mp.mpf(0)
    for j in range(n + 1):
        total += (-1) ** j * mp.binomial(n + k, n - j) * mp.mpf(x) ** j / mp.factorial(j)
    return float(total)


def moment_constant_quad(n, m):
    """Direct quadrature oracle for the moment constants."""
    val, _ = integrate.quad(
        lambda mu: math.exp(-mu) * mu**n * laguerre(m, 1, mu) / math.factorial(n),
        0.0,
        max(3 * n + 80, 120),
        limit=400,
        epsabs=1e-13,
        epsrel=1e-12,
    )
    return val


class TestLaguerre:
    def test_order_zero_is_one(self):
        assert laguerre(0, 1, 5.0) == 1.0
        assert laguerre(0, 3, -2.0) == 1.0

    def test_first_order(self):
        # L_1^(1)(x) = 2 - x
        assert laguerre(1, 1, 0.0) == 2.0
        assert laguerre(1, 1, 3.5) == pytest.approx(-1.5, abs=1e-15)

    def test_against_series_oracle(self):
        for n, k, x in [(3, 1, 1.7), (5, 1, 0.3), (7, 2, 4.2), (9, 1, 11.0), (4, 0, 2.5)]:
            assert laguerre(n, k, x) == pytest.approx(
                laguerre_series(n, k, x), rel=1e-13
            )

    def test_vectorized_matches_scalar(self):
        xs = np.linspace(0.0, 8.0, 17)
        vec = laguerre(6, 1, xs)
        assert vec.shape == xs.shape
        for x, v in zip(xs, vec):
            assert v == laguerre(6, 1, float(x))

    def test_rejects_negative_orders(self):
        with pytest.raises(ValueError):
            laguerre(-1, 0, 1.0)


class TestEvalLambda:
    def test_reference_maximum_at_zero(self):
        tf = TestFunction.create(1, 0.412019)
        assert eval_lambda(tf, 0.0) == pytest.approx(2.82404, abs=1e-5)

    def test_reference_global_minimum(self):
        tf = TestFunction.create(1, 0.412019)
        assert tf.lambda_min == pytest.approx(-0.993162, abs=1e-5)

    def test_decays_to_zero(self):
        tf = TestFunction.create(3, 1.0)
        assert abs(eval_lambda(tf, 1e6)) < 1e-300

    def test_values_stay_inside_extrema(self):
        tf = TestFunction.create(5, 0.3)
        mus = np.random.default_rng(11).uniform(0.0, 60.0, size=1_000_000)
        vals = eval_lambda(tf, mus)
        assert vals.min() >= tf.lambda_min - 1e-9
        assert vals.max() <= tf.lambda_max + 1e-9


class TestComputeExtrema:
    def test_reference_values(self):
        lo, hi = compute_extrema(1, 0.412019)
        assert lo == pytest.approx(-0.993162, abs=1e-5)
        assert hi == pytest.approx(2.824038, abs=1e-5)

    def test_analytic_stationary_point_m1(self):
        # for m=1 the interior stationary point sits at (3 + 1/r)/(1 + r)
        lo, hi = compute_extrema(1, 1.0)
        assert hi == 4.0
        assert lo == pytest.approx(-4.0 * math.exp(-2.0), rel=1e-12)
        tf = TestFunction.create(1, 1.0)
        mu_star = (3.0 + 1.0) / 2.0
        assert eval_lambda(tf, mu_star) == pytest.approx(lo, rel=1e-12)

    def test_maximum_at_least_one(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            m = int(rng.integers(0, 10))
            r = float(rng.uniform(0.05, 3.0))
            _, hi = compute_extrema(m, r)
            assert hi >= 1.0
            # the origin value (1+r)(m+1) is always a candidate
            assert hi >= (1.0 + r) * (m + 1) - 1e-12

    def test_monotone_case_m0(self):
        assert compute_extrema(0, 0.7) == (0.0, 1.7)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            compute_extrema(1, 0.0)
        with pytest.raises(ValueError):
            compute_extrema(-2, 1.0)


class TestMomentConstant:
    def test_vanishes_for_m_at_least_n(self):
        assert moment_constant(3, 5) == 0.0
        for m in range(1, 10):
            for n in range(1, m + 1):
                assert moment_constant(n, m) == pytest.approx(0.0, abs=1e-12)

    def test_zero_photon_value(self):
        assert moment_constant(0, 7) == 1.0
        assert moment_constant(0, 0) == 1.0

    def test_two_one_equals_minus_one(self):
        assert moment_constant(2, 1) == pytest.approx(-1.0, abs=1e-14)

    def test_against_quadrature(self):
        for n, m in [(2, 1), (4, 1), (5, 3), (8, 5), (12, 7)]:
            assert moment_constant(n, m) == pytest.approx(
                moment_constant_quad(n, m), rel=1e-9, abs=1e-9
            )

    def test_sign_property(self):
        for m in (1, 3, 5, 7, 9):
            for n in range(m + 1, 41):
                assert (-1) ** m * moment_constant(n, m) > 0.0


class TestExpectation:
    def test_vacuum_gives_one(self):
        for m in (1, 3, 5):
            tf = TestFunction.create(m, 0.8)
            assert expectation_lambda_fock(tf, FockDiagonal((1.0,))) == 1.0

    def test_saturates_for_low_photon_support(self):
        rng = np.random.default_rng(7)
        for m in (1, 3, 5):
            tf = TestFunction.create(m, 0.6)
            raw = rng.random(m + 1)
            rho = FockDiagonal(tuple(raw / raw.sum()))
            got = expectation_lambda_fock(tf, rho)
            assert got == pytest.approx(rho.probabilities[0], abs=1e-12)

    def test_thermal_against_quadrature(self):
        tf = TestFunction.create(1, 0.5)
        q = 0.3
        rho = FockDiagonal(tuple((1 - q) * q**n for n in range(60)))
        series = expectation_lambda_fock(tf, rho)
        quad = expectation_lambda_quad(tf, rho)
        assert series == pytest.approx(quad, abs=1e-10)

    def test_fidelity_lower_bound_random_states(self):
        rng = np.random.default_rng(42)
        tfs = [TestFunction.create(m, r) for m in (1, 3, 5) for r in (0.3, 0.9)]
        for _ in range(1000):
            size = int(rng.integers(1, 41))
            raw = rng.random(size)
            scale = rng.uniform(0.2, 1.0)  # allow truncated mass
            rho = FockDiagonal(tuple(scale * raw / raw.sum()))
            for tf in tfs[:: 2 if size > 20 else 1]:
                assert (
                    expectation_lambda_fock(tf, rho)
                    <= rho.probabilities[0] + 1e-12
                )

    def test_fock_diagonal_validation(self):
        with pytest.raises(ValueError):
            FockDiagonal((0.5, -0.1))
        with pytest.raises(ValueError):
            FockDiagonal((0.9, 0.2))
        with pytest.raises(ValueError):
            FockDiagonal(())


class TestTestFunctionType:
    def test_create_fills_extrema(self):
        tf = TestFunction.create(1, 0.412019)
        assert tf.lambda_max == pytest.approx(2.824038, abs=1e-5)
        assert tf.lambda_min <= eval_lambda(tf, 1.23) <= tf.lambda_max

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            TestFunction.create(1, -0.5)
        with pytest.raises(ValueError):
            TestFunction.create(-1, 0.5)
