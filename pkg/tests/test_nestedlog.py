import math

import pytest
from hypothesis import given, settings, strategies as st

from nselog.nestedlog import (
    CriticalConstants,
    DeltaSequence,
    DivergentDeltaError,
    SumClass,
    alpha,
    delta_sequence_from_record,
    f1_inf,
    f2_inf,
    h_func,
    interp_exponents,
    log_fixed_point,
    nested_log,
    optimal_deltas,
    phi_threshold,
    psi,
    truncated_product,
)

E = math.e


def bisect_fixed_point(lo=1.0, hi=2.0, iters=80):
    """Independent oracle: bisection on l - log(e + l)."""
    f = lambda v: v - math.log(E + v)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def partial_product_oracle(x, delta_of_j, start_j, n_terms):
    """Plain partial product, recomputing each nested log from scratch."""
    log_sum = 0.0
    for j in range(start_j, start_j + n_terms):
        ell = x
        for _ in range(j):
            ell = math.log(E + ell)
        log_sum += delta_of_j(j) * math.log1p(ell)
    return math.exp(log_sum)


def power_law_tail_bracket(a, p, after_j):
    """Integral bounds for sum_{j > after_j} a * j**-p, p > 1."""
    lo = a * (after_j + 1.0) ** (1.0 - p) / (p - 1.0)
    hi = a * float(after_j) ** (1.0 - p) / (p - 1.0)
    return lo, hi


class TestNestedLog:
    def test_base_cases(self):
        assert nested_log(1, 0.0) == pytest.approx(1.0, abs=1e-15)
        assert nested_log(0, 7.5) == 7.5

    def test_two_fold_at_zero(self):
        # high-precision evaluation of log(e + 1)
        assert nested_log(2, 0.0) == pytest.approx(math.log(E + 1.0), abs=1e-14)
        assert nested_log(2, 0.0) == pytest.approx(1.3132616875, abs=1e-9)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            nested_log(-1, 1.0)
        with pytest.raises(ValueError):
            nested_log(1, -0.5)

    def test_at_least_one_for_positive_depth(self):
        for j in (1, 2, 5, 20):
            for x in (0.0, 0.3, 1.0, 50.0, 1e9):
                assert nested_log(j, x) >= 1.0

    @given(st.floats(min_value=0.0, max_value=1e12), st.floats(min_value=1e-6, max_value=2.0))
    @settings(max_examples=200, deadline=None)
    def test_strictly_increasing_in_x(self, x, rel_bump):
        y = x * (1.0 + rel_bump) + rel_bump  # above double-precision resolution
        for j in (1, 2, 4):
            assert nested_log(j, y) > nested_log(j, x)

    def test_iterates_approach_fixed_point_monotonically(self):
        lstar = log_fixed_point()
        for x in [0.0, 0.5, 1.0, 10.0, 1e3, 1e6, 1e12]:
            gaps = [abs(nested_log(j, x) - lstar) for j in range(1, 51)]
            assert all(g2 <= g1 + 1e-15 for g1, g2 in zip(gaps, gaps[1:]))
            assert gaps[-1] <= 1e-14


class TestLogFixedPoint:
    def test_value_against_bisection_oracle(self):
        assert log_fixed_point() == pytest.approx(bisect_fixed_point(), abs=1e-12)
        assert log_fixed_point() == pytest.approx(1.4204, abs=1e-3)

    def test_defining_residual(self):
        lstar = log_fixed_point()
        assert abs(lstar - math.log(E + lstar)) <= 1e-12

    def test_deep_iterate_lands_on_it(self):
        assert abs(nested_log(20, 100.0) - log_fixed_point()) <= 1e-9


class TestTruncatedProduct:
    def test_single_explicit_factor_at_zero(self):
        pv = truncated_product(0.0, DeltaSequence.explicit([1.0]), 1, 1e-10)
        assert pv.value == pytest.approx(2.0, rel=1e-14)
        assert pv.lower == pv.upper == pv.value
        assert pv.terms_used == 1

    def test_empty_product_is_one(self):
        for x in (0.0, 3.7, 1e5):
            pv = truncated_product(x, DeltaSequence.explicit([]), 1, 1e-10)
            assert pv.value == 1.0

    def test_power_law_enclosure_vs_tail_corrected_oracle(self):
        # 200-term partial product plus an independent integral tail bracket.
        deltas = DeltaSequence.power_law(1.0, 2.0)
        p200 = partial_product_oracle(10.0, lambda j: j ** -2.0, 1, 200)
        lstar = bisect_fixed_point()
        m_lo, m_hi = power_law_tail_bracket(1.0, 2.0, 200)
        oracle_lo = p200 * math.exp(m_lo * math.log1p(lstar) * (1 - 1e-12))
        oracle_hi = p200 * math.exp(m_hi * math.log1p(nested_log(201, 10.0)))
        pv = truncated_product(10.0, deltas, 1, 1e-8)
        assert pv.upper / pv.lower - 1.0 <= 1e-8
        assert oracle_lo <= pv.lower <= pv.value <= pv.upper <= oracle_hi

    def test_finite_support_interval_contains_high_term_partial(self):
        # for finitely supported deltas the 200-term partial IS the product
        deltas = DeltaSequence.explicit([0.7, 0.0, 1.3, 0.2])
        p200 = partial_product_oracle(4.2, deltas.delta, 1, 200)
        pv = truncated_product(4.2, deltas, 1, 1e-10)
        assert pv.lower <= p200 <= pv.upper
        assert pv.value == pytest.approx(p200, rel=1e-12)

    def test_intervals_nested_as_terms_increase(self):
        deltas = DeltaSequence.power_law(1.0, 2.0)
        prev = None
        for tol in (1e-2, 1e-4, 1e-6, 1e-8):
            pv = truncated_product(5.0, deltas, 1, tol)
            if prev is not None:
                assert pv.terms_used >= prev.terms_used
                assert pv.lower >= prev.lower - 1e-15 * prev.lower
                assert pv.upper <= prev.upper + 1e-15 * prev.upper
            prev = pv

    def test_divergent_tail_refused_without_cap(self):
        with pytest.raises(DivergentDeltaError):
            truncated_product(1.0, DeltaSequence.constant(1.0), 1, 1e-8)
        with pytest.raises(DivergentDeltaError):
            truncated_product(1.0, DeltaSequence.power_law(1.0, 0.5), 1, 1e-8)

    def test_term_cap_gives_plain_partial(self):
        deltas = DeltaSequence.constant(1.0)
        pv = truncated_product(1.0, deltas, 1, 1e-8, term_cap=20)
        oracle = partial_product_oracle(1.0, lambda j: 1.0, 1, 20)
        assert pv.value == pytest.approx(oracle, rel=1e-12)
        assert pv.terms_used == 20
        assert pv.lower == pv.upper == pv.value


class TestPsi:
    def test_single_factor_at_zero(self):
        assert psi(0.0, DeltaSequence.explicit([1.0])) == pytest.approx(0.5, rel=1e-13)

    def test_empty_sequence(self):
        assert psi(0.0, DeltaSequence.explicit([])) == 1.0

    def test_exact_log_argument(self):
        # L_1(e^2 - e) = 2 exactly
        r = E * E - E
        assert psi(r, DeltaSequence.explicit([1.0])) == pytest.approx(1.0 / 3.0, rel=1e-13)

    def test_nonincreasing_in_r(self):
        deltas = DeltaSequence.power_law(1.0, 2.0)
        grid = [10.0 ** k for k in range(-3, 10)]
        vals = [psi(r, deltas) for r in grid]
        assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))
        assert all(0.0 < v <= 2.0 ** -deltas.delta(1) + 1e-12 for v in vals)


class TestCommutatorWeights:
    def test_empty_sequence_at_zero(self):
        d = DeltaSequence.explicit([])
        assert f1_inf(0.0, d) == pytest.approx(1.0, rel=1e-14)
        assert f2_inf(0.0, d) == pytest.approx(1.0, rel=1e-14)

    def test_cancellation_property(self):
        tol = 1e-10
        for deltas in (DeltaSequence.power_law(1.0, 2.0),
                       DeltaSequence.explicit([0.5, 1.5, 0.3]),
                       optimal_deltas(2.0, 6)):
            for Z in (0.0, 0.7, 3.0, 1e4):
                prod = f1_inf(Z, deltas, tol) * f2_inf(Z, deltas, tol)
                assert abs(prod - 1.0) <= 4 * tol

    def test_second_slot_explicit_value(self):
        # delta_2 = 1 picks up the factor (1 + L_2)
        Z = E * E - E
        expected = 2.0 / (1.0 + math.log(E + 2.0))
        assert f1_inf(Z, DeltaSequence.explicit([0.0, 1.0])) == pytest.approx(expected, rel=1e-12)


class TestHFunc:
    def test_empty_at_zero(self):
        assert h_func(0.0, DeltaSequence.explicit([])) == pytest.approx(2.0, rel=1e-14)

    def test_exact_log_argument(self):
        r = (E * E - E) ** 2
        assert h_func(r, DeltaSequence.explicit([])) == pytest.approx(4.0625, rel=1e-13)

    def test_against_high_term_partial_oracle(self):
        # slow power-law tail: partial product extended by an integral remainder
        deltas = DeltaSequence.power_law(1.0, 2.0)
        n_terms = 20000
        root = math.sqrt(100.0)
        p = partial_product_oracle(root, deltas.delta, 2, n_terms)
        m_lo, m_hi = power_law_tail_bracket(1.0, 2.0, n_terms + 1)
        rem = math.exp(0.5 * (m_lo + m_hi) * math.log1p(bisect_fixed_point()))
        prod = p * rem
        l1 = math.log(E + root)
        oracle = (l1 / prod) ** 2 + (prod / l1) ** 4
        assert h_func(100.0, deltas, 1e-10) == pytest.approx(oracle, rel=1e-6)

    def test_positive(self):
        for r in (0.0, 1.0, 1e8):
            assert h_func(r, DeltaSequence.power_law(1.0, 2.0)) > 0.0


class TestAlpha:
    def test_empty_sum(self):
        assert alpha(DeltaSequence.constant(1.0), 0) == 1.0

    def test_three_terms(self):
        # 1 / (1 + 1 + 1/2 + 1/6)
        assert alpha(DeltaSequence.constant(1.0), 3) == pytest.approx(0.375, abs=1e-15)

    def test_twenty_terms_reaches_inverse_e(self):
        assert alpha(DeltaSequence.constant(1.0), 20) == pytest.approx(1.0 / E, abs=1e-6)

    def test_strictly_decreasing_in_n(self):
        deltas = DeltaSequence.constant(0.5)
        vals = [alpha(deltas, n) for n in range(0, 12)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_strictly_decreasing_in_each_delta(self):
        base = [0.5, 0.5, 0.5]
        for k in range(3):
            bumped = list(base)
            bumped[k] += 0.25
            assert (alpha(DeltaSequence.explicit(bumped), 3)
                    < alpha(DeltaSequence.explicit(base), 3))

    def test_custom_constants(self):
        consts = CriticalConstants(c=(2.0,))
        # 1/(1 + 2*1/1!) with remaining c_j defaulting to 1
        assert alpha(DeltaSequence.constant(1.0), 1, consts) == pytest.approx(1.0 / 3.0)
        with pytest.raises(ValueError):
            CriticalConstants(c=(0.0,))


class TestPhiThreshold:
    def test_zero_at_half(self):
        assert phi_threshold(0.5, 4.0, DeltaSequence.constant(1.0), 5) == 0.0

    def test_arithmetic_case(self):
        # 0.1 ** 0.375 with alpha(delta=1, c=1, n=3)
        val = phi_threshold(0.6, 4.0, DeltaSequence.constant(1.0), 3)
        assert val == pytest.approx(0.1 ** 0.375, rel=1e-12)
        assert val == pytest.approx(0.42170, abs=1e-4)

    def test_alpha_to_zero_limit(self):
        # huge delta mass drives alpha ~ 0, so the threshold approaches 1
        deltas = DeltaSequence.explicit([1e12])
        assert phi_threshold(0.6, 4.0, deltas, 1) == pytest.approx(1.0, abs=1e-10)

    def test_rejections(self):
        with pytest.raises(ValueError):
            phi_threshold(0.49, 4.0, DeltaSequence.constant(1.0), 1)
        with pytest.raises(ValueError):
            phi_threshold(0.6, 3.0, DeltaSequence.constant(1.0), 1)


class TestOptimalDeltas:
    def test_single_term(self):
        assert optimal_deltas(1.0, 1).values == (1.0,)

    def test_three_terms(self):
        vals = optimal_deltas(1.0, 3).values
        assert vals == pytest.approx((1 / 9, 2 / 9, 6 / 9), rel=1e-15)

    def test_scaling(self):
        vals = optimal_deltas(2.0, 2).values
        assert vals == pytest.approx((2 / 3, 4 / 3), rel=1e-15)

    @given(st.floats(min_value=1e-3, max_value=1e3), st.integers(min_value=1, max_value=40))
    @settings(max_examples=100, deadline=None)
    def test_mass_is_preserved(self, total, n):
        seq = optimal_deltas(total, n)
        assert math.fsum(seq.values) == pytest.approx(total, rel=1e-12)
        assert seq.sum_class is SumClass.CONVERGENT


class TestInterpExponents:
    def test_q4(self):
        th, a, K = interp_exponents(4.0)
        assert (th, a, K) == pytest.approx((0.6, 0.375, 2.75), abs=1e-15)

    def test_q6(self):
        th, a, K = interp_exponents(6.0)
        assert (th, a, K) == pytest.approx((0.5625, 0.5, 2.5625), abs=1e-15)

    def test_large_q_limits(self):
        th, a, K = interp_exponents(1e12)
        assert th == pytest.approx(0.5, abs=1e-9)
        assert a == pytest.approx(0.75, abs=1e-9)
        assert K > 1.0

    def test_rejects_small_q(self):
        with pytest.raises(ValueError):
            interp_exponents(3.0)


class TestDeltaSequence:
    def test_classification_is_symbolic(self):
        c = DeltaSequence.constant(2.0)
        assert (c.sum_class, c.factorial_sum_class) == (SumClass.DIVERGENT, SumClass.CONVERGENT)
        p_fast = DeltaSequence.power_law(1.0, 2.0)
        assert (p_fast.sum_class, p_fast.factorial_sum_class) == (SumClass.CONVERGENT, SumClass.CONVERGENT)
        p_slow = DeltaSequence.power_law(1.0, 1.0)
        assert p_slow.sum_class is SumClass.DIVERGENT
        e = DeltaSequence.explicit([1.0, 2.0])
        assert (e.sum_class, e.factorial_sum_class) == (SumClass.UNKNOWN, SumClass.UNKNOWN)

    def test_generator_values(self):
        p = DeltaSequence.power_law(3.0, 2.0)
        assert p.delta(2) == pytest.approx(0.75)
        assert DeltaSequence.constant(0.25).delta(17) == 0.25
        assert DeltaSequence.explicit([1.0]).delta(5) == 0.0

    def test_positivity_enforced(self):
        with pytest.raises(ValueError):
            DeltaSequence.constant(0.0)
        with pytest.raises(ValueError):
            DeltaSequence.power_law(-1.0, 2.0)
        with pytest.raises(ValueError):
            DeltaSequence.explicit([1.0, -0.1])

    def test_tail_mass_bounds(self):
        lo, hi = DeltaSequence.power_law(1.0, 2.0).tail_mass_bounds(100)
        assert lo <= math.pi ** 2 / 6 - sum(j ** -2.0 for j in range(1, 101)) <= hi
        assert DeltaSequence.constant(1.0).tail_mass_bounds(10) is None
        lo, hi = DeltaSequence.explicit([1.0, 2.0, 3.0]).tail_mass_bounds(1)
        assert lo == hi == 5.0

    def test_record_round_trip(self):
        for seq in (DeltaSequence.constant(0.5),
                    DeltaSequence.power_law(2.0, 1.5),
                    DeltaSequence.factorial_weighted(1.0, 4),
                    DeltaSequence.explicit([0.1, 0.2])):
            back = delta_sequence_from_record(seq.as_record())
            assert back == seq

    def test_record_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            delta_sequence_from_record({"kind": "power_law", "a": 1.0, "p": 2.0, "zz": 1})
        with pytest.raises(ValueError):
            delta_sequence_from_record({"kind": "nope"})
