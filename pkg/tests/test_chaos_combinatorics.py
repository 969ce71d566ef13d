"""
Test per la combinatoria del caos (core/chaos_combinatorics.py)
"""

import math
from fractions import Fraction

import numpy as np
import pytest
import sympy

from core.chaos_combinatorics import (
    MultiIndexAlpha, SmoothFunction, SymmetricTensor, basis_vector, beta_function,
    coeff_C, coeff_W, coeff_W_hat, compose_derivative, contract, enumerate_A,
    enumerate_B, enumerate_B0, gauss_hermite_grid, gaussian_moment_direct, gaussian_moment_functional,
    hermite, hermite_expand_power, symmetric_contract, symmetrize, tensor_product,
    theorem51_terms,
)
from core.errors import BudgetError, ContractError

PARTITIONS = {1: 1, 2: 2, 3: 3, 4: 5, 5: 7, 6: 11, 7: 15, 8: 22}


# ── Hermite ──────────────────────────────────────────────────────────────

class TestHermite:
    def test_base_cases(self):
        assert hermite(0, 2.5) == 1.0
        assert hermite(1, 2.5) == 2.5

    def test_known_values(self):
        assert hermite(2, 3.0) == pytest.approx(8.0)
        assert hermite(4, 1.0) == pytest.approx(-2.0)

    def test_vectorised(self):
        x = np.linspace(-2, 2, 7)
        assert np.allclose(hermite(3, x), x ** 3 - 3 * x)

    def test_negative_degree(self):
        with pytest.raises(ContractError):
            hermite(-1, 0.0)

    @pytest.mark.parametrize("k,expected", [(1, [1]), (2, [1, 1]), (4, [1, 6, 3]), (5, [1, 10, 15])])
    def test_expand_power(self, k, expected):
        assert hermite_expand_power(k) == expected

    def test_expand_power_reconstructs_monomial(self):
        x = np.linspace(-3, 3, 11)
        coeffs = hermite_expand_power(6)
        rebuilt = sum(c * hermite(6 - 2 * j, x) for j, c in enumerate(coeffs))
        assert np.allclose(rebuilt, x ** 6)

    @pytest.mark.parametrize("p", range(11))
    @pytest.mark.parametrize("q", range(11))
    def test_orthogonality(self, p, q):
        nodes, weights = gauss_hermite_grid(1, nodes=40)
        value = float(np.sum(weights * hermite(p, nodes[0]) * hermite(q, nodes[0])))
        scale = math.sqrt(math.factorial(p) * math.factorial(q))
        expected = math.factorial(q) if p == q else 0.0
        assert abs(value - expected) <= 1e-8 * scale


# ── Momenti gaussiani ────────────────────────────────────────────────────

class TestGaussianMoments:
    def test_constant_function(self):
        f = SmoothFunction("1")
        assert gaussian_moment_functional(f, [1.0], [2]) == pytest.approx(1.0)

    def test_identity_function(self):
        f = SmoothFunction("x")
        assert gaussian_moment_functional(f, [1.0], [1]) == pytest.approx(1.0)

    def test_cos_second_moment_vanishes(self):
        """E[cos(η)η²] = E[cos η] − E[cos η] = 0."""
        f = SmoothFunction("cos(x)")
        assert gaussian_moment_functional(f, [1.0], [2]) == pytest.approx(0.0, abs=1e-10)
        assert gaussian_moment_direct(f, [1.0], [2]) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("expr,alpha,k", [
        ("sin(x)", 0.7, 3),
        ("1/(1 + exp(-x))", 1.3, 4),
        ("x**2 + 1", 0.5, 2),
    ])
    def test_expansion_matches_direct(self, expr, alpha, k):
        f = SmoothFunction(expr)
        rhs = gaussian_moment_functional(f, [alpha], [k])
        lhs = gaussian_moment_direct(f, [alpha], [k])
        assert rhs == pytest.approx(lhs, rel=1e-8, abs=1e-12)

    def test_two_variables(self):
        f = SmoothFunction("cos(x)*y**2", variables=("x", "y"))
        rhs = gaussian_moment_functional(f, [0.8, 0.5], [2, 2], nodes=60)
        lhs = gaussian_moment_direct(f, [0.8, 0.5], [2, 2], nodes=60)
        assert rhs == pytest.approx(lhs, rel=1e-8, abs=1e-12)

    def test_insufficient_order(self):
        f = SmoothFunction("cos(x)", max_order=2)
        with pytest.raises(ContractError, match="insufficiente"):
            gaussian_moment_functional(f, [1.0], [3])

    def test_mismatched_lengths(self):
        with pytest.raises(ContractError):
            gaussian_moment_functional(SmoothFunction("x"), [1.0, 2.0], [1])


# ── Multi-indici ─────────────────────────────────────────────────────────

class TestEnumeration:
    def test_q1_single_element(self):
        out = enumerate_A(1, 0, 1)
        assert len(out) == 1
        assert out[0].k == (1,)
        assert out[0].b == ((1,),)

    def test_q2_elements(self):
        out = enumerate_A(2, 0, 1)
        assert {(al.k, al.b) for al in out} == {((2, 0), ((2,), (0,))), ((0, 1), ((0,), (1,)))}

    @pytest.mark.parametrize("q", range(1, 9))
    def test_count_matches_partitions(self, q):
        assert len(enumerate_A(q, 0, 1)) == PARTITIONS[q]

    def test_order_is_deterministic(self):
        out = enumerate_A(3, 1, 2)
        assert out == sorted(out, key=lambda al: (al.k, al.a, al.b))
        assert len(set(out)) == len(out)

    def test_split_counts(self):
        assert len(enumerate_B(1, 0, 1)) == 2
        assert len(enumerate_B0(1, 0, 1)) == 1
        assert len(enumerate_B(2, 0, 1)) == 5

    @pytest.mark.parametrize("q,m,d", [(2, 1, 2), (3, 0, 2), (3, 1, 1)])
    def test_split_count_identity(self, q, m, d):
        expected = sum(math.prod(x + 1 for row in al.b for x in row) for al in enumerate_A(q, m, d))
        assert len(enumerate_B(q, m, d)) == expected

    def test_b0_has_no_prime_in_last_row(self):
        for beta in enumerate_B0(3, 1, 2):
            assert not any(beta.b_prime[-1])

    def test_budget_guard(self):
        with pytest.raises(BudgetError):
            enumerate_A(8, 3, 3, budget=10)

    def test_invalid_alpha_rejected(self):
        with pytest.raises(ContractError):
            MultiIndexAlpha(k=(1, 1), a=(), b=((1,), (1,)), q=2, m=0, d=1)


# ── Coefficienti ─────────────────────────────────────────────────────────

class TestCoefficients:
    def test_c_q1(self):
        assert coeff_C(enumerate_A(1, 0, 1)[0]) == 1

    def test_c_q2(self):
        assert [coeff_C(al) for al in enumerate_A(2, 0, 1)] == [1, 1]

    def test_c_q3(self):
        assert sorted(coeff_C(al) for al in enumerate_A(3, 0, 1)) == [1, 1, 3]

    def test_w_with_zero_second_part(self):
        for beta in enumerate_B(2, 1, 1):
            if beta.norm_b_second == 0:
                assert coeff_W(beta, (0,)) == coeff_C(beta.alpha)

    def test_w_hat_q1(self):
        beta = enumerate_B0(1, 0, 1)[0]
        assert coeff_W(beta, (0,)) == 1
        assert coeff_W_hat(beta, (0,), exact=True) == Fraction(4, 3)
        assert coeff_W_hat(beta, (0,)) == pytest.approx(4 / 3)

    def test_beta_function(self):
        assert beta_function(1, 1) == pytest.approx(1.0)
        assert beta_function(0.5, 2) == pytest.approx(4 / 3)

    def test_l_out_of_range(self):
        beta = enumerate_B0(1, 0, 1)[0]
        with pytest.raises(ContractError):
            coeff_W(beta, (1,))

    def test_bound_terms_q1(self):
        terms = theorem51_terms(1, 0, 1)
        assert len(terms) == 1
        assert terms[0].w_hat == Fraction(4, 3)

    def test_faa_di_bruno(self):
        """(f∘g)^(q) con f = exp, g = sin, confrontata con sympy."""
        x = sympy.Symbol("x")
        x0 = 0.3
        for q in range(1, 7):
            g = [float(sympy.diff(sympy.sin(x), x, i).subs(x, x0)) for i in range(q + 1)]
            outer = [math.exp(g[0])] * (q + 1)
            exact = float(sympy.diff(sympy.exp(sympy.sin(x)), x, q).subs(x, x0))
            assert compose_derivative(q, outer, g) == pytest.approx(exact, rel=1e-10)

    def test_faa_di_bruno_exact_rationals(self):
        """f(y) = y², g(x) = x³ in x = 1: (x⁶)‴ = 120."""
        outer = [Fraction(1), Fraction(2), Fraction(2), Fraction(0)]
        inner = [Fraction(1), Fraction(3), Fraction(6), Fraction(6)]
        assert compose_derivative(3, outer, inner) == 120


# ── Tensori ──────────────────────────────────────────────────────────────

class TestTensors:
    def test_orthonormal_contraction(self):
        e1 = basis_vector(0, 3)
        assert contract(e1, e1, 1) == pytest.approx(1.0)

    def test_orthogonal_contraction(self):
        e1, e2 = basis_vector(0, 2), basis_vector(1, 2)
        out = contract(tensor_product(e1, e1), tensor_product(e2, e2), 1)
        assert np.allclose(out, 0.0)

    def test_symmetrized_contraction(self):
        # symmetrize media sulle permutazioni: sym(e1⊗e2) = ½(e1⊗e2 + e2⊗e1), da cui il fattore ¼
        e1, e2 = basis_vector(0, 2), basis_vector(1, 2)
        f = symmetrize(tensor_product(e1, e2))
        out = contract(f, f, 1)
        assert np.allclose(out, 0.25 * (tensor_product(e1, e1) + tensor_product(e2, e2)))

    def test_full_contraction_is_inner_product(self):
        f = symmetrize(np.random.default_rng(0).normal(size=(3, 3)))
        assert contract(f, f, 2) == pytest.approx(f.norm() ** 2)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_symmetrize_idempotent(self, seed):
        t = np.random.default_rng(seed).normal(size=(3, 3, 3))
        once = symmetrize(t)
        assert np.allclose(symmetrize(once).entries, once.entries, atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_symmetrize_does_not_increase_norm(self, seed):
        t = np.random.default_rng(seed).normal(size=(3, 3, 3))
        assert symmetrize(t).norm() <= np.linalg.norm(t.ravel()) + 1e-12

    def test_zero_contraction_is_tensor_product(self):
        a, b = basis_vector(0, 2), basis_vector(1, 2)
        assert np.allclose(contract(a, b, 0), tensor_product(a, b))

    def test_symmetric_contract_returns_tensor(self):
        a = symmetrize(tensor_product(basis_vector(0, 3), basis_vector(1, 3)))
        out = symmetric_contract(a, a, 0)
        assert isinstance(out, SymmetricTensor)
        assert out.order == 4

    def test_non_symmetric_rejected(self):
        with pytest.raises(ContractError):
            SymmetricTensor(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            contract(basis_vector(0, 2), basis_vector(0, 3), 1)

    def test_order_too_high(self):
        with pytest.raises(ContractError):
            contract(basis_vector(0, 2), basis_vector(0, 2), 2)
