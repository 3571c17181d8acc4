"""Kernel series: products, reciprocal differences, mixtures, column series."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poexp.errors import DegenerateSpacingError
from poexp.kernel import (
    KernelTable,
    SignedLogValue,
    a_n,
    b_k,
    capital_lambda,
    capital_pi,
    check_vandermonde,
    is_non_explosive,
    kappa,
    kappa_row_precise,
    term,
)
from poexp.sequences import IntensitySequence, RealSequence


def spanning_rates(rng, count, lo=0.5, hi=10.0, jitter=(0.7, 1.3)):
    """Random distinct rates spanning [lo, hi] with jittered spacing.

    The jitter band bounds the conditioning of the power identities so the
    residual check stays meaningful in double precision.
    """
    gaps = rng.uniform(*jitter, size=count - 1)
    cum = np.concatenate(([0.0], np.cumsum(gaps)))
    return lo + (hi - lo) * cum / cum[-1]

CONST2 = IntensitySequence.constant(2.0)
EX_B_LAMBDA = IntensitySequence.affine(1.0, 1.0)  # 1, 2, 3, ...
EX_B_MU = IntensitySequence.constant(1.0)
EX_A = IntensitySequence.quadratic(0.5)  # (n+1)^2 / 2


class TestTerm:
    def test_constant_tail(self):
        assert term(CONST2, 7) == 2.0

    def test_prefix_lookup(self):
        seq = IntensitySequence.affine(1.0, 1.0, prefix=(1.5,))
        assert term(seq, 0) == 1.5
        assert term(seq, 1) == 2.0

    def test_quadratic_tail(self):
        assert term(IntensitySequence.quadratic(0.5), 1) == 2.0

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            term(CONST2, -1)


class TestCapitalLambda:
    def test_empty_product_is_one(self):
        assert capital_lambda(EX_B_LAMBDA, 0).value == 1.0

    def test_constant_rates_power(self):
        for n in range(6):
            assert capital_lambda(CONST2, n).value == pytest.approx(2.0**n, rel=1e-14)

    def test_example_b_factorial(self):
        for n in range(1, 12):
            assert capital_lambda(EX_B_LAMBDA, n).value == pytest.approx(
                math.factorial(n), rel=1e-13
            )


class TestCapitalPi:
    def test_example_b(self):
        for n in range(8):
            assert capital_pi(EX_B_LAMBDA, EX_B_MU, n).value == pytest.approx(
                math.factorial(n + 2), rel=1e-13
            )

    def test_example_a(self):
        for n in range(8):
            assert capital_pi(EX_A, EX_A, n).value == pytest.approx(
                math.factorial(n + 1) ** 2, rel=1e-13
            )

    def test_single_factor(self):
        one = IntensitySequence.constant(1.0)
        assert capital_pi(one, one, 0).value == pytest.approx(2.0)


class TestKappa:
    def test_base_case(self):
        assert kappa(CONST2, 0, 0).value == 1.0

    def test_two_terms(self):
        seq = RealSequence(prefix=(1.0, 3.0), tail_num=(5.0,))
        assert kappa(seq, 1, 0).value == pytest.approx(0.5)
        assert kappa(seq, 1, 1).value == pytest.approx(-0.5)

    def test_affine_closed_form(self):
        # spacing nu: kappa[n,k] = (-1)^k nu^-n / (k! (n-k)!)
        mu, nu = 1.0, 0.7
        seq = RealSequence.affine(mu, nu)
        for n in range(6):
            for k in range(n + 1):
                expect = (-1.0) ** k * nu ** (-n) / (math.factorial(k) * math.factorial(n - k))
                assert kappa(seq, n, k).value == pytest.approx(expect, rel=1e-12)

    def test_degenerate_spacing_rejected(self):
        seq = RealSequence(prefix=(1.0, 1.0 + 1e-12), tail_num=(3.0,))
        with pytest.raises(DegenerateSpacingError):
            kappa(seq, 1, 0)

    def test_sign_pattern_increasing_sequence(self):
        seq = RealSequence(prefix=(0.5, 1.1, 2.0, 3.7), tail_num=(5.0, 1.0))
        for n in range(6):
            for k in range(n + 1):
                assert kappa(seq, n, k).sign == (-1) ** k


class TestAn:
    def test_row_zero_is_exponential(self):
        assert a_n(CONST2, 0, 1.0) == pytest.approx(math.exp(-2.0))

    def test_zero_at_origin(self):
        seq = RealSequence(prefix=(1.0, 2.0, 3.0, 4.0), tail_num=(5.0, 1.0))
        assert a_n(seq, 2, 0.0) == 0.0
        assert a_n(seq, 1, 0.0) == 0.0

    def test_convolution_oracle(self):
        # P{N(0.7)=3} for rates (1,2,3,4) by adaptive triple quadrature of the
        # exponential-gap convolution (scipy.tplquad, abs err < 5e-15), divided
        # by the rate product 6.
        seq = RealSequence(prefix=(1.0, 2.0, 3.0, 4.0), tail_num=(5.0, 1.0))
        assert a_n(seq, 3, 0.7) == pytest.approx(0.010558939016719641, abs=1e-12)

    def test_taylor_onset(self):
        # the first n-1 derivatives vanish at 0 and the n-th equals 1, so
        # a_n(h) ~ h^n / n! for small h
        seq = RealSequence(prefix=(1.0, 2.0, 3.5, 5.0), tail_num=(7.0, 1.0))
        for n in (2, 3):
            h = 1e-3
            assert a_n(seq, n, h) * math.factorial(n) / h**n == pytest.approx(1.0, abs=0.05)

    def test_positive_for_positive_time(self):
        seq = RealSequence(prefix=(1.0, 2.0, 3.0), tail_num=(4.0, 1.0))
        for n in range(3):
            for t in (0.1, 0.5, 2.0):
                assert a_n(seq, n, t) > 0.0


class TestBk:
    def test_linear_case_closed_form(self):
        # constant shock rate with affine kill rates: b_k has the closed form
        # (-1)^k (lam/nu)^k e^(lam/nu) / k!
        lam, mu, nu = 1.5, 1.0, 1.0
        lam_seq = IntensitySequence.constant(lam)
        mu_seq = IntensitySequence.affine(mu, nu)
        for k in range(6):
            res = b_k(lam_seq, mu_seq, 1.0, k)
            expect = (-1.0) ** k * (lam / nu) ** k * math.exp(lam / nu) / math.factorial(k)
            assert res.converged
            assert res.value == pytest.approx(expect, rel=1e-11)

    def test_example_b_diverges(self):
        res = b_k(EX_B_LAMBDA, EX_B_MU, 1.0, 0)
        assert not res.converged

    def test_k0_direct_sum(self):
        # lam = nu = 1: b_0 = sum lam^n / n! = e
        lam_seq = IntensitySequence.constant(1.0)
        mu_seq = IntensitySequence.affine(1.0, 1.0)
        res = b_k(lam_seq, mu_seq, 1.0, 0)
        assert res.converged
        assert res.value == pytest.approx(math.e, rel=1e-12)


class TestVandermonde:
    def test_hand_evaluated_triple(self):
        seq = RealSequence(prefix=(1.0, 2.0, 4.0), tail_num=(8.0, 1.0))
        k20 = kappa(seq, 2, 0).value
        k21 = kappa(seq, 2, 1).value
        k22 = kappa(seq, 2, 2).value
        assert (k20, k21, k22) == pytest.approx((1 / 3, -1 / 2, 1 / 6))
        assert check_vandermonde(seq, 2) < 1e-14

    def test_pair_exact(self):
        seq = RealSequence(prefix=(0.9, 4.2), tail_num=(6.0, 1.0))
        assert check_vandermonde(seq, 1) < 1e-15

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=2**32 - 1))
    def test_random_sequences(self, n, seed):
        vals = spanning_rates(np.random.default_rng(seed), n + 1)
        seq = RealSequence(prefix=tuple(vals), tail_num=(20.0, 1.0))
        assert check_vandermonde(seq, n) < 1e-8

    def test_random_sequences_n10(self):
        for seed in range(50):
            vals = spanning_rates(np.random.default_rng(seed), 11, jitter=(0.5, 1.5))
            seq = RealSequence(prefix=tuple(vals), tail_num=(20.0, 1.0))
            assert check_vandermonde(seq, 10) < 1e-8

    def test_log_space_table_matches_compensated_row(self):
        for seed in range(25):
            vals = spanning_rates(np.random.default_rng(seed), 13)
            table = KernelTable(vals)
            precise = kappa_row_precise(vals, 12)
            from_log = table.kappa_sign[12, :13] * np.exp(table.kappa_log[12, :13])
            assert np.max(np.abs(from_log - precise) / np.abs(precise)) < 1e-12


class TestNonExplosion:
    def test_constant(self):
        assert is_non_explosive(IntensitySequence.constant(1.5))

    def test_quadratic_explodes(self):
        assert not is_non_explosive(IntensitySequence.quadratic(1.0))

    def test_affine(self):
        assert is_non_explosive(EX_B_LAMBDA)


class TestSignedLogValue:
    def test_zero_roundtrip(self):
        assert SignedLogValue.from_value(0.0).value == 0.0

    def test_multiplication(self):
        x = SignedLogValue.from_value(-3.0)
        y = SignedLogValue.from_value(2.0)
        assert (x * y).value == pytest.approx(-6.0)

    def test_huge_products_stay_finite_in_log_space(self):
        x = SignedLogValue.from_value(1e300)
        y = x * x
        assert y.log_magnitude == pytest.approx(2 * math.log(1e300))


class TestSequences:
    def test_positivity_enforced(self):
        with pytest.raises(ValueError):
            IntensitySequence(prefix=(1.0, -2.0), tail_num=(1.0,))
        with pytest.raises(ValueError):
            IntensitySequence(prefix=(), tail_num=(5.0, -1.0))  # eventually negative

    def test_algebra_matches_pointwise(self):
        a = IntensitySequence.affine(1.0, 2.0, prefix=(0.5,))
        b = IntensitySequence.quadratic(0.25)
        s = a + b
        for n in range(10):
            assert s.term(n) == pytest.approx(a.term(n) + b.term(n), rel=1e-14)

    def test_product_matches_pointwise(self):
        a = RealSequence.affine(1.0, 2.0, prefix=(0.5,))
        b = RealSequence.constant(3.0, prefix=(1.0, 2.0))
        p = a * b
        for n in range(10):
            assert p.term(n) == pytest.approx(a.term(n) * b.term(n), rel=1e-14)

    def test_as_affine_detection(self):
        assert IntensitySequence.affine(1.0, 1.0).as_affine() == (1.0, 1.0)
        assert IntensitySequence.constant(2.0).as_affine() == (2.0, 0.0)
        assert IntensitySequence.affine(1.0, 1.0, prefix=(9.0,)).as_affine() is None
        assert IntensitySequence.quadratic(1.0).as_affine() is None

    def test_reciprocal_affine_tail(self):
        seq = IntensitySequence.reciprocal_affine(1.0, 1.0)
        for n in range(6):
            assert seq.term(n) == pytest.approx(1.0 / (n + 1))
        assert seq.tail_degree == -1
        assert seq.non_explosive
        assert seq.as_affine() is None

    def test_rational_closure(self):
        lam = IntensitySequence.constant(1.0)
        mu = IntensitySequence.reciprocal_affine(1.0, 1.0)
        g = lam + mu
        for n in range(8):
            assert g.term(n) == pytest.approx(1.0 + 1.0 / (n + 1), rel=1e-14)
        q = RealSequence.affine(2.0, 1.0).divide(RealSequence.affine(1.0, 1.0))
        for n in range(8):
            assert q.term(n) == pytest.approx((2.0 + n) / (1.0 + n), rel=1e-14)

    def test_terms_range(self):
        seq = RealSequence.affine(1.0, 0.5, prefix=(9.0, 8.0))
        np.testing.assert_allclose(seq.terms_range(1, 6), [8.0, 2.0, 2.5, 3.0, 3.5])
