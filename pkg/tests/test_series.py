from __future__ import annotations

import random
from fractions import Fraction

import mpmath
import pytest
from mpmath import mp, mpf

from hardy_identities import series as S
from hardy_identities.catalog import annulus_coefficients
from hardy_identities.errors import DomainError, FitRejected, UsageError
from hardy_identities.series import (
    EXACT,
    FLOAT,
    TailEstimate,
    add,
    arctan_series,
    binomial_series,
    cauchy_product,
    compose,
    exp_series,
    fit_tail,
    fit_tail_auto,
    hardy_partial_sum,
    hardy_partial_sum_exact,
    hypergeometric_terms,
    log_ratio_series,
    make_series,
    moebius_compose,
    monomial,
    scale,
    scale_variable,
    sin_series,
    substitute_power,
)

F = Fraction


def coeffs(f):
    return list(f.coeffs)


class TestContainer:
    def test_order_and_backend(self):
        f = make_series([1, 2, 3])
        assert f.order == 2
        assert f.backend == EXACT
        assert make_series([1.5, 2]).backend == FLOAT

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            make_series([])

    def test_unknown_backend(self):
        with pytest.raises(UsageError):
            S.TruncatedSeries((F(1),), "decimal")

    def test_truncate(self):
        f = arctan_series(9)
        assert f.truncate(3).coeffs == (0, 1, 0, F(-1, 3))
        with pytest.raises(UsageError):
            f.truncate(10)

    def test_evaluate(self):
        f = arctan_series(201)
        assert abs(f(mpf("0.1")) - mpmath.atan(mpf("0.1"))) < mpf(10) ** -35


class TestAdd:
    def test_one_plus_z_and_one_minus_z(self):
        assert coeffs(make_series([1, 1]) + make_series([1, -1])) == [2, 0]

    def test_arctan_minus_itself(self):
        f = arctan_series(20)
        assert all(c == 0 for c in add(f, scale(f, -1)))

    def test_even_part_of_binomials(self):
        p = F(1, 3)
        plus = binomial_series(2 * p, 30)
        minus = scale_variable(plus, -1)
        both = add(plus, minus)
        assert all(both[n] == 0 for n in range(1, 31, 2))
        assert all(both[n] == 2 * plus[n] for n in range(0, 31, 2))
        assert both[2] == 2 * F(-1, 9)

    def test_result_order_is_minimum(self):
        assert add(arctan_series(5), arctan_series(9)).order == 5

    def test_backend_mismatch(self):
        with pytest.raises(UsageError):
            add(arctan_series(5), arctan_series(5, FLOAT))


class TestCauchyProduct:
    def test_one_plus_z_squared(self):
        f = make_series([1, 1, 0])
        assert coeffs(cauchy_product(f, f)) == [1, 2, 1]

    def test_square_of_log_ratio(self):
        f = log_ratio_series(7)
        sq = cauchy_product(f, f)
        assert sq[2] == 4
        assert sq[4] == 4 * F(2, 3)
        assert sq[6] == 4 * F(23, 45)
        assert sq[0] == sq[1] == sq[3] == sq[5] == 0

    def test_focal_inner_sum_at_one(self):
        p = F(1, 3)
        plus = binomial_series(2 * p, 6)
        even = scale(add(plus, scale_variable(plus, -1)), F(1, 2))
        neg = substitute_power(scale_variable(binomial_series(-p, 6), -1), 2)
        product = cauchy_product(even, neg)
        assert product[2] == F(2, 9)
        assert product[0] == 1

    def test_backend_mismatch(self):
        with pytest.raises(UsageError):
            cauchy_product(arctan_series(5), exp_series(5, FLOAT))

    @pytest.mark.parametrize("n", [10, 80, 300])
    def test_float_matches_exact(self, n):
        rng = random.Random(n)
        a = make_series([F(rng.randint(-999, 999), rng.randint(1, 99)) for _ in range(n + 1)])
        b = make_series([F(rng.randint(-999, 999), rng.randint(1, 99)) for _ in range(n + 1)])
        exact = cauchy_product(a, b)
        approx = cauchy_product(a.to_float(), b.to_float())
        scale_ = max(abs(S.to_real(c)) for c in exact)
        for x, y in zip(exact, approx):
            assert abs(S.to_real(x) - y) <= mpf(2) ** -118 * scale_

    def test_kronecker_matches_schoolbook(self):
        rng = random.Random(7)
        n = 400
        a = [rng.randint(-(10**40), 10**40) for _ in range(n)]
        b = [rng.randint(-(10**30), 10**30) for _ in range(n)]
        direct = [sum(a[i] * b[k - i] for i in range(k + 1)) for k in range(n)]
        assert n * n > S._KRONECKER_THRESHOLD
        assert S._int_convolve(a, b, n) == direct

    def test_kronecker_all_negative_and_sparse(self):
        n = 200
        a = [-(i % 5) for i in range(n)]
        b = [0] * n
        b[3] = -7
        b[150] = 11
        direct = [sum(a[i] * b[k - i] for i in range(k + 1)) for k in range(n)]
        assert S._int_convolve(a, b, n) == direct


class TestCompose:
    def test_identity_outer(self):
        g = arctan_series(12)
        assert compose(monomial(1, 12), g) == g

    def test_half_angle_sine(self):
        f = compose(sin_series(9), scale(arctan_series(9), F(1, 2)))
        assert f[1] == F(1, 2)
        assert f[0] == 0

    def test_exp_of_arctan(self):
        f = compose(exp_series(5), arctan_series(5))
        assert coeffs(f) == [1, 1, F(1, 2), F(-1, 6), F(-7, 24), F(1, 24)]

    def test_exp_of_arctan_matches_annulus_recurrence(self):
        assert compose(exp_series(40), arctan_series(40)) == annulus_coefficients(40)

    def test_nonzero_inner_constant(self):
        with pytest.raises(UsageError):
            compose(exp_series(5), exp_series(5))
        with pytest.raises(UsageError):
            compose(exp_series(5, FLOAT), exp_series(5, FLOAT))

    def test_float_matches_exact(self):
        outer = sin_series(60)
        inner = scale(arctan_series(60), F(3, 2))
        exact = compose(outer, inner)
        approx = compose(outer.to_float(), inner.to_float())
        for x, y in zip(exact, approx):
            assert abs(S.to_real(x) - y) <= mpf(2) ** -115

    def test_float_large_inner_norm(self):
        # Inner l1 norm well above 1 exercises the rescaling path.
        outer = exp_series(40)
        inner = scale(arctan_series(40), 5)
        exact = compose(outer, inner)
        approx = compose(outer.to_float(), inner.to_float())
        for x, y in zip(exact, approx):
            assert abs(S.to_real(x) - y) <= mpf(2) ** -110 * max(1, abs(S.to_real(x)))


class TestSubstitutePower:
    def test_one_plus_z_to_fourth_power(self):
        assert coeffs(substitute_power(make_series([1, 1, 0, 0, 0]), 4)) == [1, 0, 0, 0, 1]

    def test_triangle_term(self):
        h = hypergeometric_terms([F(1, 3), F(2, 3)], [F(4, 3)], 4)
        assert substitute_power(h, 3, order=12)[3] == F(1, 6)

    def test_square_term(self):
        h = hypergeometric_terms([F(1, 4), F(1, 2)], [F(5, 4)], 4)
        assert substitute_power(h, 4, order=16)[4] == F(1, 10)

    def test_order_limits(self):
        f = arctan_series(4)
        assert substitute_power(f, 2, order=9).order == 9
        with pytest.raises(UsageError):
            substitute_power(f, 2, order=10)
        with pytest.raises(UsageError):
            substitute_power(f, 0)


class TestHypergeometric:
    def test_leading_term(self):
        assert hypergeometric_terms([F(2, 7), 5], [F(9, 4)], 3)[0] == 1

    def test_first_term(self):
        assert hypergeometric_terms([F(1, 3), F(2, 3)], [F(4, 3)], 3)[1] == F(1, 6)

    def test_catalan_form(self):
        h = hypergeometric_terms([F(1, 4), F(3, 4)], [F(3, 2)], 10)
        signed = scale_variable(h, -1)
        from hardy_identities.numerics import catalan

        for j in range(11):
            assert signed[j] == F((-1) ** j * catalan(2 * j), 16**j)
        assert signed[1] == F(-1, 8)

    def test_float_backend(self):
        exact = hypergeometric_terms([F(1, 3), F(1, 3), F(2, 3), F(2, 3)], [F(4, 3), F(4, 3), 1], 600)
        approx = hypergeometric_terms([F(1, 3), F(1, 3), F(2, 3), F(2, 3)], [F(4, 3), F(4, 3), 1], 600, FLOAT)
        for n in (1, 10, 300, 600):
            x = S.to_real(exact[n])
            assert abs(approx[n] - x) <= mpf(2) ** -120 * x

    def test_bad_lower_parameter(self):
        with pytest.raises(DomainError):
            hypergeometric_terms([1], [-2], 5)
        with pytest.raises(DomainError):
            hypergeometric_terms([1], [0], 5)


class TestHardySums:
    def test_constant_term_excluded(self):
        f = make_series([F(5, 7), 1, 0, 0])
        assert hardy_partial_sum_exact(f) == 1
        assert hardy_partial_sum(f)[0] == 1

    def test_arctan_three(self):
        assert hardy_partial_sum_exact(arctan_series(3)) == 1 + F(1, 9)

    def test_annulus_five(self):
        f = annulus_coefficients(5)
        assert coeffs(f) == [1, 1, F(1, 2), F(-1, 6), F(-7, 24), F(1, 24)]
        assert hardy_partial_sum_exact(f) == 1 + F(1, 4) + F(1, 36) + F(49, 576) + F(1, 576)

    def test_terms_list_keeps_constant(self):
        total, terms = hardy_partial_sum(make_series([3, 2]))
        assert terms == [9, 4]
        assert total == 4

    def test_float_and_exact_agree(self):
        f = arctan_series(1000)
        a, _ = hardy_partial_sum(f)
        b, _ = hardy_partial_sum(f.to_float())
        assert abs(a - b) <= mpf(2) ** -118

    def test_exact_requires_exact_backend(self):
        with pytest.raises(UsageError):
            hardy_partial_sum_exact(arctan_series(3, FLOAT))


class TestMoebius:
    def test_exact_small_case(self):
        # (z + w)/(1 + w z) itself: f = z.
        w = F(1, 3)
        g = moebius_compose(monomial(1, 4), w, 6)
        expected = [w] + [(1 - w * w) * (-w) ** (n - 1) for n in range(1, 7)]
        assert coeffs(g) == expected

    def test_float_matches_exact(self):
        f = arctan_series(200)
        w = F(3, 10)
        exact = moebius_compose(f, w, 30)
        approx = moebius_compose(f.to_float(), mpf(3) / 10, 30)
        for x, y in zip(exact, approx):
            assert abs(S.to_real(x) - y) < mpf(2) ** -110

    def test_constant_term_is_value(self):
        f = arctan_series(S.moebius_outer_order(20, 0.3), FLOAT)
        g = moebius_compose(f, mpf("0.3"), 20)
        assert abs(g[0] - mpmath.atan(mpf("0.3"))) < mpf(2) ** -110

    def test_w_out_of_range(self):
        with pytest.raises(UsageError):
            moebius_compose(arctan_series(5), 1, 5)


def odd_square_terms(n):
    return [F(0)] + [F(1, (2 * k + 1) ** 2) for k in range(1, n + 1)]


class TestFitTail:
    def test_odd_squares(self):
        n = 4096
        terms = [mpf(1) / (2 * k + 1) ** 2 if k else mpf(0) for k in range(n + 1)]
        est = fit_tail(terms)
        assert abs(est.fitted_exponent - 2) < 0.01
        partial = mpmath.fsum(terms[1:]) + 1
        remainder = mpmath.pi**2 / 8 - partial
        ratio = est.tail_bound / remainder
        assert mpf(1) / 2 <= ratio <= 2
        assert est.fit_window == (n - n // 4, n)

    def test_exact_terms_accepted(self):
        est = fit_tail(odd_square_terms(256))
        assert abs(est.fitted_exponent - 2) < 0.05

    @pytest.mark.parametrize("n", [64, 256, 1024])
    def test_geometric(self, n):
        # A power law fitted over a wide window bends away from a geometric
        # sequence, so the check uses the last 16 points.
        terms = [mpf(4) ** -k for k in range(n + 1)]
        est = fit_tail(terms, window=range(n - 15, n + 1))
        true_tail = mpf(4) ** -n / 3
        assert true_tail <= est.tail_bound <= 4 * true_tail

    def test_geometric_exponent_grows_with_window(self):
        terms = [mpf(4) ** -k for k in range(129)]
        early = fit_tail(terms, window=range(16, 33)).fitted_exponent
        late = fit_tail(terms, window=range(96, 129)).fitted_exponent
        assert late > early > 1

    def test_divergent_flag(self):
        terms = [mpf(0)] + [mpf(1) / k for k in range(1, 2001)]
        est = fit_tail(terms)
        assert est.diverges
        assert est.tail_bound == mpf("inf")

    def test_zero_density(self):
        # Odd-index-only terms: the remainder counts only every other index.
        n = 4000
        terms = [mpf(1) / k**2 if k % 2 else mpf(0) for k in range(n + 1)]
        est = fit_tail(terms)
        assert abs(est.density - 0.5) < 0.01
        true_tail = mpmath.nsum(lambda j: 1 / (2 * j + 1) ** 2, [n // 2, mpmath.inf])
        assert mpf(1) / 2 <= est.tail_bound / true_tail <= 2

    def test_non_monotone_rejected(self):
        terms = [mpf(0)] + [mpf(2 + (-1) ** k) / k**2 for k in range(1, 200)]
        with pytest.raises(FitRejected):
            fit_tail(terms)

    def test_short_window_rejected(self):
        with pytest.raises(FitRejected):
            fit_tail([mpf(1) / (k + 1) ** 2 for k in range(6)])

    def test_window_bounds(self):
        with pytest.raises(UsageError):
            fit_tail([mpf(1)] * 20, window=range(5, 30))

    def test_auto_block_fallback(self):
        terms = [mpf(0)] + [mpf(2 + (-1) ** k) / k**3 for k in range(1, 4097)]
        est = fit_tail_auto(terms)
        assert est.block > 1
        assert abs(est.fitted_exponent - 3) < 0.05

    def test_auto_terminating(self):
        est = fit_tail_auto([mpf(0), mpf(1)] + [mpf(0)] * 30)
        assert est.tail_bound == 0
        assert not est.diverges

    def test_tail_estimate_invariants(self):
        with pytest.raises(UsageError):
            TailEstimate(2.0, mpf(1), mpf(-1), (1, 5))
        with pytest.raises(UsageError):
            TailEstimate(2.0, mpf(1), mpf(1), (5, 1))


def test_float_coefficients_follow_working_precision():
    with mp.workprec(200):
        f = arctan_series(5, FLOAT)
        assert abs(f[3] + mpf(1) / 3) < mpf(2) ** -195
