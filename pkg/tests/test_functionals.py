"""
Test per i funzionali (core/functionals.py)
"""

import math

import numpy as np
import pytest

from core.errors import AccuracyError, BudgetError, ContractError, DomainError
from core.fbm_engine import TimeGrid, sample_path
from core.functionals import (
    LimitKind, LimitSpec, WeightFunction, an_fn_gap, an_ito_pair_half, an_u_grid, c_H,
    evaluate_An, expected_An, get_weight, ito_Fn_half, quad_functional_An, rho_nm,
    rho_nm_quadrature, sample_An, sample_Fn, sample_weighted_qv, sigma_H_series,
    sigma_H_truncation, skorohod_Fn, weighted_limit_sample, weighted_qv_batch, weighted_qv_Fn,
)
from core.replica_pool import mean_and_se


# ── Costanti ─────────────────────────────────────────────────────────────

class TestConstants:
    def test_c_half(self):
        assert c_H(0.5) == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_c_three_quarters(self):
        assert c_H(0.75) == pytest.approx(math.sqrt(0.75 * math.gamma(1.5)))
        assert c_H(0.75) == pytest.approx(0.81527, abs=1e-5)

    def test_c_rough_rejected(self):
        with pytest.raises(DomainError):
            c_H(0.3)

    def test_sigma_half(self):
        assert sigma_H_series(0.5) == pytest.approx(2.0, abs=1e-12)

    def test_sigma_continuous_at_half(self):
        assert sigma_H_series(0.4999) == pytest.approx(2.0, abs=1e-3)
        assert sigma_H_series(0.5001) == pytest.approx(2.0, abs=1e-3)

    def test_sigma_above_two_off_half(self):
        assert sigma_H_series(0.3) > 2.0
        assert sigma_H_series(0.7) > 2.0

    def test_sigma_truncation_bound(self):
        p, bound = sigma_H_truncation(0.3, tol=1e-10)
        assert p > 1
        assert bound <= 1e-10

    def test_sigma_outside_convergence(self):
        with pytest.raises(DomainError):
            sigma_H_series(0.8)
        with pytest.raises(DomainError):
            sigma_H_series(0.2)

    @pytest.mark.parametrize("n,m,h", [(1, 1, 0.6), (2, 4, 0.75), (4, 2, 0.6)])
    def test_rho_nm_matches_quadrature(self, n, m, h):
        assert rho_nm(n, m, h) == pytest.approx(rho_nm_quadrature(n, m, h), rel=1e-4)

    def test_rho_nm_requires_smooth_regime(self):
        with pytest.raises(DomainError):
            rho_nm(1, 1, 0.5)
        with pytest.raises(DomainError):
            rho_nm_quadrature(1, 1, 0.4)

    def test_gap(self):
        assert an_fn_gap(8, 0.5) == pytest.approx(0.5 * math.sqrt(8) / 9)


# ── Funzioni peso ────────────────────────────────────────────────────────

class TestWeights:
    def test_bank(self):
        assert get_weight("cos")(0.0) == pytest.approx(1.0)
        assert get_weight("quadratic")(2.0) == pytest.approx(5.0)

    def test_constant_weight_broadcasts(self):
        out = get_weight("one")(np.zeros((3, 4)))
        assert out.shape == (3, 4)
        assert np.all(out == 1.0)

    def test_unknown_weight(self):
        with pytest.raises(ContractError, match="sconosciuta"):
            get_weight("tanh")

    def test_derivatives_consistent(self):
        assert get_weight("cos").check_consistency()

    def test_require_order(self):
        f = WeightFunction("sin(x)", max_order=2)
        with pytest.raises(ContractError):
            f.require_order(3)

    def test_limit_spec_scale(self):
        assert LimitSpec(LimitKind.QUADRATIC, 0.5).scale == pytest.approx(1 / math.sqrt(2))
        spec = LimitSpec(LimitKind.WEIGHTED_QV, 0.5, weight=get_weight("cos"))
        assert spec.scale == pytest.approx(math.sqrt(2.0))

    def test_limit_spec_weight_mismatch(self):
        with pytest.raises(ContractError):
            LimitSpec(LimitKind.WEIGHTED_QV, 0.4)


# ── Aₙ e Fₙ ──────────────────────────────────────────────────────────────

class TestQuadraticFunctional:
    def test_u_grid(self):
        u, t = an_u_grid(4, 5)
        assert u[0] == 0.0 and t[-1] == 1.0
        assert np.allclose(t ** 4, u)

    def test_u_grid_cap(self):
        with pytest.raises(BudgetError):
            an_u_grid(4, 10 ** 7)

    def test_expected_close_to_gap(self):
        assert expected_An(8, 0.5) == pytest.approx(an_fn_gap(8, 0.5), rel=1e-2)

    def test_expected_converges_with_grid(self):
        gap = an_fn_gap(32, 0.75)
        coarse = abs(expected_An(32, 0.75, 256) - gap)
        fine = abs(expected_An(32, 0.75, 8192) - gap)
        assert fine < coarse

    @pytest.mark.parametrize("n", [8, 64, 512])
    def test_halving_u_grid_is_stable(self, n):
        """Stesso cammino: Aₙ sui punti pari della griglia contro la griglia intera."""
        u, t = an_u_grid(n, 32769)
        path = sample_path(TimeGrid(t), 0.5, seed=2024)
        fine = evaluate_An(path.values, u, n, 0.5)[0]
        coarse = evaluate_An(path.values[::2], u[::2], n, 0.5)[0]
        assert abs(coarse - fine) <= 1e-3 * max(1.0, abs(fine))

    def test_mean_matches_expected(self):
        batch = sample_An(8, 0.75, seed=3, replicas=2000, u_points=256)
        mean, se = mean_and_se(batch.values)
        assert abs(mean - expected_An(8, 0.75, 256)) <= 4 * se
        assert np.allclose(batch.s_values, c_H(0.75) * np.abs(batch.b1))

    def test_skorohod_is_shifted_An(self):
        a_n = quad_functional_An(16, 0.7, seed=5, replica=2, u_points=128)
        f_n = skorohod_Fn(16, 0.7, seed=5, replica=2, u_points=128)
        assert f_n == pytest.approx(a_n.value - an_fn_gap(16, 0.7))

    def test_sample_Fn_smooth_regime(self):
        a_n = sample_An(8, 0.7, seed=9, replicas=5, u_points=64)
        f_n = sample_Fn(8, 0.7, seed=9, replicas=5, u_points=64)
        assert np.allclose(f_n.values, a_n.values - an_fn_gap(8, 0.7))

    def test_rough_hurst_rejected(self):
        with pytest.raises(DomainError):
            sample_An(8, 0.3, seed=1, replicas=2)


class TestIto:
    def test_pair_identity_and_moments(self):
        n = 4
        batch, f_n = an_ito_pair_half(n, seed=17, replicas=3000, u_points=256)
        mean_f, se_f = mean_and_se(f_n)
        assert abs(mean_f) <= 4 * se_f
        abs_mean, abs_se = mean_and_se(np.abs(f_n))
        assert abs_mean <= math.sqrt(n) / math.sqrt(2 * n + 2) + 3 * abs_se
        gap_mean, gap_se = mean_and_se(batch.values - f_n)
        assert abs(gap_mean - expected_An(n, 0.5, 256)) <= 4 * gap_se

    def test_sample_Fn_brownian_uses_ito(self):
        _, f_n = an_ito_pair_half(4, seed=2, replicas=6, u_points=64)
        batch = sample_Fn(4, 0.5, seed=2, replicas=6, u_points=64)
        assert np.allclose(batch.values, f_n)

    def test_single_path(self):
        path = sample_path(TimeGrid.uniform(64), 0.5, seed=4)
        value = ito_Fn_half(path, 8)
        t = path.grid.points
        expected = math.sqrt(8) * np.sum(t[:-1] ** 8 * path.values[:-1] * np.diff(path.values))
        assert value == pytest.approx(expected)

    def test_coarse_grid(self):
        path = sample_path(TimeGrid.uniform(16), 0.5, seed=4)
        with pytest.raises(AccuracyError):
            ito_Fn_half(path, 4)

    def test_requires_brownian(self):
        path = sample_path(TimeGrid.uniform(64), 0.3, seed=4)
        with pytest.raises(DomainError):
            ito_Fn_half(path, 4)


# ── Variazione quadratica pesata ─────────────────────────────────────────

class TestWeightedQV:
    def test_hand_computed(self):
        """n = 2, H = 1/2, f = 1 + x², B = (0, 1, 3)."""
        out = weighted_qv_batch(np.array([[0.0, 1.0, 3.0]]), get_weight("quadratic"), 0.5)
        assert out[0] == pytest.approx(math.sqrt(2) * (1 * 0.5 + 2 * 3.5))

    def test_single_path_matches_batch(self):
        path = sample_path(TimeGrid.uniform(32), 0.4, seed=6)
        f = get_weight("cos")
        assert weighted_qv_Fn(path, f) == pytest.approx(weighted_qv_batch(path.values, f, 0.4)[0])

    @pytest.mark.parametrize("c", [2.0, -0.5])
    def test_scaling_weight(self, c):
        path = sample_path(TimeGrid.uniform(32), 0.4, seed=6)
        f = get_weight("cos")
        g = f.scaled(c)
        assert weighted_qv_Fn(path, g) == pytest.approx(c * weighted_qv_Fn(path, f), rel=1e-10)
        base = weighted_limit_sample(path, f, 0.4, eta=0.8)
        assert weighted_limit_sample(path, g, 0.4, eta=0.8) == pytest.approx(abs(c) * base, rel=1e-10)

    def test_constant_weight_variance(self):
        """f ≡ 1: E[Fₙ] = 0 e Var(Fₙ) ≈ σ_H = Var del limite."""
        batch = sample_weighted_qv(128, get_weight("one"), 0.4, seed=12, replicas=3000)
        mean, se = mean_and_se(batch.values)
        assert abs(mean) <= 4 * se
        assert np.allclose(batch.s_values, math.sqrt(sigma_H_series(0.4)))
        ratio = np.var(batch.values) / np.var(batch.limit_values)
        assert ratio == pytest.approx(1.0, abs=0.15)

    def test_hurst_range(self):
        with pytest.raises(DomainError):
            sample_weighted_qv(16, get_weight("cos"), 0.6, seed=1, replicas=2)
        with pytest.raises(DomainError):
            sample_weighted_qv(16, get_weight("cos"), 0.2, seed=1, replicas=2)
