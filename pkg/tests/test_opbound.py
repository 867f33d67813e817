"""Tests for the parity moments, comparison matrices, and spectral bound."""

import math

import numpy as np
import pytest

from cvqkd.opbound import (
    AcceptanceSpec,
    DualCoefficients,
    bound_B,
    charpoly_eigenvalues,
    coherent_fock_vector,
    jacobi_eigenvalues,
    m_cor_r2,
    m_err_r4,
    msuc_matrices,
    oracle_sigma_sup_M,
    parity_moments,
    parity_moments_quad,
)


def _pm_fields(pm):
    return {k: getattr(pm, k) for k in ("c_ev", "c_od", "d_ev", "d_od", "v_ev", "v_od")}


class TestParityMoments:
    def test_full_acceptance_limit(self):
        # vanishing threshold accepts everything: d -> 1, v -> 0
        pm = parity_moments(AcceptanceSpec(x_th=1e-12, beta=0.8))
        assert pm.d_ev == pytest.approx(1.0, abs=1e-9)
        assert pm.d_od == pytest.approx(1.0, abs=1e-9)
        assert pm.v_ev == pytest.approx(0.0, abs=1e-9)
        assert pm.v_od == pytest.approx(0.0, abs=1e-9)

    def test_zero_amplitude_weights(self):
        pm = parity_moments(AcceptanceSpec(x_th=0.7, beta=0.0))
        assert pm.c_ev == 1.0
        assert pm.c_od == 0.0
        assert pm.small_beta

    def test_weights_sum_to_one(self):
        for beta in (0.1, 0.7, 1.9):
            pm = parity_moments(AcceptanceSpec(x_th=0.5, beta=beta))
            assert pm.c_ev + pm.c_od == pytest.approx(1.0, abs=1e-15)

    def test_against_quadrature(self):
        for x_th in (0.3, 0.6, 1.1, 1.8):
            for beta in (0.15, 0.8, 1.2, 1.9):
                spec = AcceptanceSpec(x_th=x_th, beta=beta)
                a, b = parity_moments(spec), parity_moments_quad(spec)
                for name, x in _pm_fields(a).items():
                    assert x == pytest.approx(
                        getattr(b, name), rel=1e-10, abs=1e-12
                    ), name

    def test_small_beta_branch_is_continuous(self):
        below = parity_moments(AcceptanceSpec(x_th=0.8, beta=0.000999)).d_od
        above = parity_moments(AcceptanceSpec(x_th=0.8, beta=0.001001)).d_od
        assert below == pytest.approx(above, rel=1e-8)

    def test_small_beta_matches_limit(self):
        # at beta = 1e-8 the value must coincide with the beta -> 0 limit
        tiny = parity_moments(AcceptanceSpec(x_th=1.1, beta=1e-8))
        a = math.sqrt(2.0) * 1.1
        from scipy.special import erfc

        limit = erfc(a) + (2.0 * a / math.sqrt(math.pi)) * math.exp(-a * a)
        assert tiny.d_od == pytest.approx(limit, rel=1e-12)

    def test_second_moment_identity_in_fock_space(self):
        # v = d - d^2 relies on the filter being a projector-valued step;
        # check it against explicit operator moments in a truncated space
        x_th, beta, n_max = 0.7, 1.1, 80
        m_ev, m_od = msuc_matrices(x_th, n_max)
        v = coherent_fock_vector(beta, n_max)
        v_m = coherent_fock_vector(-beta, n_max)
        even, odd = (v + v_m) / 2.0, (v - v_m) / 2.0
        pm = parity_moments(AcceptanceSpec(x_th=x_th, beta=beta))
        d_ev_fock = even @ m_ev @ even / pm.c_ev
        second = even @ m_ev @ m_ev @ even / pm.c_ev
        assert d_ev_fock == pytest.approx(pm.d_ev, rel=1e-10)
        assert second - d_ev_fock**2 == pytest.approx(pm.v_ev, rel=1e-8, abs=1e-12)
        d_od_fock = odd @ m_od @ odd / pm.c_od
        assert d_od_fock == pytest.approx(pm.d_od, rel=1e-10)


class TestComparisonMatrices:
    def test_err_block_structure_at_zero_duals(self):
        pm = parity_moments(AcceptanceSpec(x_th=0.9, beta=0.7))
        mat = m_err_r4(pm, DualCoefficients(0.0, 0.0))
        assert mat[1, 2] == 0.0  # coupling vanishes with kappa
        top_left = mat[:2, :2]
        assert np.allclose(
            top_left, [[1.0, math.sqrt(pm.v_od)], [math.sqrt(pm.v_od), pm.d_od]]
        )
        bottom_right = mat[2:, 2:]
        assert np.allclose(
            bottom_right, [[pm.d_ev, math.sqrt(pm.v_ev)], [math.sqrt(pm.v_ev), 1.0]]
        )

    def test_err_matrix_symmetric(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            pm = parity_moments(
                AcceptanceSpec(x_th=rng.uniform(0.1, 2), beta=rng.uniform(0, 2))
            )
            duals = DualCoefficients(rng.uniform(0, 10), rng.uniform(0, 10))
            mat = m_err_r4(pm, duals, gamma_plus=rng.uniform(0, 1))
            assert np.array_equal(mat, mat.T)

    def test_cor_at_zero_kappa(self):
        pm = parity_moments(AcceptanceSpec(x_th=0.9, beta=0.7))
        mat = m_cor_r2(pm, DualCoefficients(0.0, 1.5), gamma_plus=0.25)
        assert np.allclose(mat, np.diag([-0.25, -1.5]))

    def test_cor_rank_one_at_zero_gamma(self):
        pm = parity_moments(AcceptanceSpec(x_th=0.9, beta=0.7))
        kappa = 2.5
        eigs = np.linalg.eigvalsh(m_cor_r2(pm, DualCoefficients(kappa, 0.0)))
        assert eigs[0] == pytest.approx(0.0, abs=1e-12)
        # trace is kappa (c_ev + c_od) = kappa
        assert eigs[1] == pytest.approx(kappa, rel=1e-12)

    def test_cor_quadratic_formula(self):
        pm = parity_moments(AcceptanceSpec(x_th=0.5, beta=1.3))
        duals = DualCoefficients(3.0, 0.8)
        mat = m_cor_r2(pm, duals)
        a, b, d = mat[0, 0], mat[0, 1], mat[1, 1]
        expected = 0.5 * ((a + d) + math.hypot(a - d, 2 * b))
        assert np.linalg.eigvalsh(mat)[-1] == pytest.approx(expected, rel=1e-14)


class TestEigensolvers:
    def test_jacobi_matches_charpoly_and_lapack(self):
        rng = np.random.default_rng(12)
        for n in (2, 3, 4, 5):
            for _ in range(25):
                mat = rng.normal(size=(n, n))
                mat = (mat + mat.T) / 2.0
                jac = jacobi_eigenvalues(mat)
                chp = charpoly_eigenvalues(mat)
                lap = np.linalg.eigvalsh(mat)
                scale = max(1.0, np.abs(lap).max())
                assert np.abs(jac - chp).max() < 1e-12 * scale
                assert np.abs(jac - lap).max() < 1e-12 * scale

    def test_production_err_eigs_match_charpoly(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            pm = parity_moments(
                AcceptanceSpec(x_th=rng.uniform(0.1, 2), beta=rng.uniform(0.05, 2))
            )
            duals = DualCoefficients(rng.uniform(0, 10), rng.uniform(0, 10))
            mat = m_err_r4(pm, duals)
            jac = jacobi_eigenvalues(mat)
            chp = charpoly_eigenvalues(mat)
            scale = max(1.0, np.abs(jac).max())
            assert np.abs(jac - chp).max() < 1e-12 * scale

    def test_charpoly_handles_repeated_eigenvalues(self):
        mat = np.diag([2.0, 2.0, -1.0, 0.5])
        assert np.allclose(charpoly_eigenvalues(mat), [-1.0, 0.5, 2.0, 2.0], atol=1e-9)

    def test_jacobi_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            jacobi_eigenvalues(np.ones((2, 3)))


class TestBound:
    def test_at_least_one(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            pm = parity_moments(
                AcceptanceSpec(x_th=rng.uniform(0.1, 2), beta=rng.uniform(0, 2))
            )
            duals = DualCoefficients(rng.uniform(0, 10), rng.uniform(0, 10))
            assert bound_B(pm, duals) >= 1.0

    def test_zero_dual_closed_form(self):
        # with both duals off, the top block gives (1 + d + sqrt((1-d)^2 + 4v))/2
        from cvqkd.opbound import ParityMoments

        pm = ParityMoments(
            c_ev=0.6, c_od=0.4, d_ev=0.2, d_od=0.5, v_ev=0.16, v_od=0.25
        )
        expected = (1.0 + 0.5 + math.sqrt(0.25 + 1.0)) / 2.0
        got = bound_B(pm, DualCoefficients(0.0, 0.0))
        assert expected == pytest.approx(1.309017, abs=1e-6)
        assert got >= expected - 1e-12

    def test_nonincreasing_in_gamma(self):
        pm = parity_moments(AcceptanceSpec(x_th=0.8, beta=0.9))
        for kappa in (0.0, 1.0, 5.0):
            values = [
                bound_B(pm, DualCoefficients(kappa, g)) for g in np.linspace(0, 8, 30)
            ]
            assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


class TestFockOracle:
    def test_povm_part_bounded_by_one(self):
        spec = AcceptanceSpec(x_th=0.6, beta=1.0)
        top = oracle_sigma_sup_M(spec, DualCoefficients(0.0, 0.0), n_max=40)
        assert top <= 1.0 + 1e-9

    def test_requires_enough_photons(self):
        with pytest.raises(ValueError):
            oracle_sigma_sup_M(AcceptanceSpec(0.5, 0.5), DualCoefficients(1, 1), n_max=10)

    def test_oracle_below_bound_random(self):
        rng = np.random.default_rng(99)
        for _ in range(40):
            spec = AcceptanceSpec(
                x_th=float(rng.uniform(0.1, 2.0)), beta=float(rng.uniform(0.0, 2.0))
            )
            duals = DualCoefficients(
                float(rng.uniform(0, 10)), float(rng.uniform(0, 10))
            )
            top = oracle_sigma_sup_M(spec, duals, n_max=40)
            assert top <= bound_B(parity_moments(spec), duals) + 1e-6

    def test_large_gamma_pushes_toward_err_branch(self):
        spec = AcceptanceSpec(x_th=0.8, beta=0.9)
        pm = parity_moments(spec)
        duals = DualCoefficients(1.0, 10.0)
        top = oracle_sigma_sup_M(spec, duals, n_max=60)
        err_top = float(jacobi_eigenvalues(m_err_r4(pm, duals))[-1])
        assert top <= max(err_top, 1.0) + 1e-6

    def test_coherent_vector_norm(self):
        for beta in (0.0, 0.5, 1.5):
            v = coherent_fock_vector(beta, 60)
            assert v @ v == pytest.approx(1.0, abs=1e-12)
