import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivelox.analytic import (
    AlphaAboveIV,
    DegenerateR,
    UnstableLambda,
    exact_failure_prob,
    failure_prob_bounds,
    kl_binary,
    no_feedback_error_prob,
)
from oracles import kl as oracle_kl
from oracles import rational_tail


class TestKl:
    def test_frozen_value(self):
        # kl(1/2 || 1/4) = (1/2) ln(4/3); the constant below is that to 17 digits
        assert kl_binary(0.5, 0.25) == pytest.approx(0.14384103622589045, abs=1e-16)

    def test_zero_conventions(self):
        assert kl_binary(0.0, 0.3) == pytest.approx(-math.log(0.7), rel=1e-15)
        assert kl_binary(1.0, 0.3) == pytest.approx(-math.log(0.3), rel=1e-15)
        assert kl_binary(0.0, 0.0) == 0.0
        assert kl_binary(0.5, 0.0) == math.inf
        assert kl_binary(0.5, 1.0) == math.inf

    def test_domain(self):
        with pytest.raises(ValueError):
            kl_binary(-0.1, 0.5)
        with pytest.raises(ValueError):
            kl_binary(0.5, 1.5)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_nonnegative_zero_iff_equal(self, a, b):
        v = kl_binary(a, b)
        assert v >= 0.0
        if a == b:
            assert v == 0.0

    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_matches_direct_formula(self, a, b):
        assert kl_binary(a, b) == pytest.approx(oracle_kl(a, b), rel=1e-12)


class TestExactTail:
    def test_single_link_power_law(self):
        for N in range(1, 12):
            assert exact_failure_prob(1, N, 0.3) == pytest.approx(0.3**N, rel=1e-14)

    def test_below_r_is_one(self):
        assert exact_failure_prob(5, 4, 0.2) == 1.0

    def test_rejects_nonpositive_n(self):
        with pytest.raises(ValueError):
            exact_failure_prob(5, 0, 0.2)

    def test_perfect_links(self):
        assert exact_failure_prob(5, 5, 0.0) == 0.0

    def test_rational_oracle_spot(self):
        for r, N, p in [(2, 7, 0.5), (7, 19, 0.3), (20, 30, 0.7), (13, 28, 0.1)]:
            want = float(rational_tail(r, N, Fraction(p).limit_denominator(10)))
            assert exact_failure_prob(r, N, p) == pytest.approx(want, rel=1e-12)

    def test_deep_tail_no_underflow(self):
        # far tail where naive summation underflows to 0 term-by-term
        v = exact_failure_prob(3, 4000, 0.1)
        assert 0.0 < v < 1e-1000 or v == 0.0
        assert exact_failure_prob(3, 300, 0.1) > 0.0

    @given(st.integers(1, 15), st.integers(1, 60), st.floats(0.01, 0.95))
    def test_range_and_monotonicity(self, r, N, p):
        v = exact_failure_prob(r, N, p)
        assert 0.0 <= v <= 1.0
        assert exact_failure_prob(r, N + 1, p) <= v + 1e-15
        assert exact_failure_prob(r + 1, N, p) >= v - 1e-15


class TestBounds:
    def test_sandwich_spot(self):
        for r, N, p in [(5, 40, 0.3), (2, 11, 0.01), (10, 80, 0.1), (4, 30, 0.5)]:
            b = failure_prob_bounds(r, N, p)
            assert b.lower <= b.exact * (1 + 1e-12)
            assert b.exact <= b.chernoff_upper * (1 + 1e-12)
            assert b.exact <= b.sum_upper * (1 + 1e-12)

    def test_upper_bounds_clamped(self):
        b = failure_prob_bounds(3, 30, 0.3)
        assert b.chernoff_upper <= 1.0 and b.sum_upper <= 1.0

    def test_requires_r_at_least_two(self):
        with pytest.raises(DegenerateR):
            failure_prob_bounds(1, 10, 0.3)

    def test_lambda_shift(self):
        plain = failure_prob_bounds(4, 40, 0.1)
        shifted = failure_prob_bounds(4, 40, 0.05, lam=0.5)
        assert shifted.p_eff == pytest.approx(0.1)
        assert shifted.exact == pytest.approx(plain.exact, rel=1e-12)

    def test_unstable_lambda(self):
        with pytest.raises(UnstableLambda):
            failure_prob_bounds(4, 40, 0.6, lam=0.5)

    def test_ratio_at_velocity_rejected(self):
        # r/N = 0.5 equals 1 - p for p = 0.5
        with pytest.raises(AlphaAboveIV):
            failure_prob_bounds(5, 10, 0.5)

    def test_exponential_order(self):
        # both bounds track exp(-N KL((r-1)/N || 1-p)) to polynomial factors
        r, p = 6, 0.2
        for N in (50, 100, 200):
            b = failure_prob_bounds(r, N, p)
            rate = kl_binary((r - 1) / N, 1 - p)
            assert -math.log(b.lower) / N == pytest.approx(rate, rel=0.2)
            assert -math.log(b.sum_upper) / N == pytest.approx(rate, rel=0.2)


def test_no_feedback_scaling():
    assert no_feedback_error_prob(0.1, 4) == pytest.approx(0.075)
    assert no_feedback_error_prob(0.1, 1) == 0.0
    with pytest.raises(ValueError):
        no_feedback_error_prob(1.5, 4)
    with pytest.raises(ValueError):
        no_feedback_error_prob(0.1, 0)
