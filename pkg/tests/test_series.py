import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from odestrata.errors import DomainError, RadiusError
from odestrata.series import (
    Dyadic,
    GeometricTail,
    Interval,
    Polynomial,
    TruncatedSeries,
    as_rational,
    eval_certified,
    int_mul_trunc,
    poly_compose_many,
    poly_compose_series,
    series_integrate,
    series_mul,
)

from oracles import compose_scalar, convolve, e_bounds, taylor_exp

rationals = st.builds(Fraction, st.integers(-999, 999), st.integers(1, 50))


def S(*coeffs, center=0):
    return TruncatedSeries.scalar([Fraction(c) for c in coeffs], center)


# --- rationals and dyadics -------------------------------------------------


def test_as_rational_is_canonical():
    q = as_rational(Fraction(6, -4))
    assert (q.numerator, q.denominator) == (-3, 2)
    assert as_rational("3/9") == Fraction(1, 3)
    assert as_rational(0.1) == Fraction(3602879701896397, 2**55)  # binary value, exactly
    with pytest.raises(TypeError):
        as_rational(1j)


def test_dyadic_canonical_mantissa():
    d = Dyadic(12, -4)
    assert (d.mantissa, d.exponent) == (3, -2)
    assert Dyadic(0, 7) == Dyadic(0, 0)
    assert Dyadic.exact(Fraction(3, 8)) == Dyadic(3, -3)
    with pytest.raises(ValueError):
        Dyadic.exact(Fraction(1, 3))


@given(rationals, st.integers(0, 40))
def test_dyadic_rounding_brackets(q, prec):
    lo = Dyadic.round(q, prec, "floor").to_fraction()
    hi = Dyadic.round(q, prec, "ceil").to_fraction()
    near = Dyadic.round(q, prec, "nearest").to_fraction()
    step = Fraction(1, 2**prec)
    assert lo <= q <= hi and hi - lo <= step
    assert abs(near - q) <= step / 2


def test_dyadic_text():
    d = Dyadic(5, -3)
    assert str(d) == "5*2^-3"
    assert d.decimal(3).startswith("0.625")


def test_interval_enclose_and_contains():
    iv = Interval.enclose(Fraction(1, 3), Fraction(1, 2), 10)
    assert iv.contains(Fraction(1, 3)) and iv.contains(Fraction(1, 2))
    assert iv.width <= Fraction(1, 6) + Fraction(2, 2**10)
    with pytest.raises(ValueError):
        Interval(Dyadic(1), Dyadic(0))


# --- polynomials -------------------------------------------------------------


def test_polynomial_evaluate_and_shift():
    P = Polynomial.from_dicts(1, [{(0, 3): 1, (0, 1): -1, (1, 0): 2}])
    assert P.evaluate(Fraction(1, 2), [2]) == (Fraction(7),)
    Q = P.shifted(1, [Fraction(1, 3)])
    for s, w in [(0, 0), (Fraction(1, 5), Fraction(-2, 7)), (2, 3)]:
        assert Q.evaluate(s, [w]) == P.evaluate(1 + s, [Fraction(1, 3) + w])


def test_polynomial_rejects_bad_monomials():
    with pytest.raises(DomainError):
        Polynomial.from_dicts(1, [{(0, 1, 1): 1}])
    with pytest.raises(DomainError):
        Polynomial.from_dicts(2, [{(0, 1, 0): 1}])


def test_polynomial_partials():
    P = Polynomial.from_dicts(2, [{(0, 2, 1): 3}, {(1, 0, 0): 1}])
    dy1, dy2 = P.jacobian_columns()
    assert dy1.terms(0) == {(0, 1, 1): 6}
    assert dy2.terms(0) == {(0, 2, 0): 3}
    assert P.partial(0).terms(1) == {(0, 0, 0): 1}
    assert not P.is_autonomous and P.degree == 3


# --- series multiplication ---------------------------------------------------


def test_mul_examples():
    assert series_mul(S(1, 1, 0), S(1, 1, 0), 3) == S(1, 2, 1)
    assert series_mul(S(1, 2, 3), S(0, 0, 0), 3) == S(0, 0, 0)
    geo = S(*([1] * 8))
    assert series_mul(geo, S(1, -1, 0, 0, 0, 0, 0, 0), 8) == S(1, 0, 0, 0, 0, 0, 0, 0)


def test_mul_mismatched_centres():
    with pytest.raises(DomainError):
        series_mul(S(1, 1), S(1, 1, center=1), 2)


@given(
    st.lists(rationals, min_size=1, max_size=32),
    st.lists(rationals, min_size=1, max_size=32),
)
def test_mul_matches_double_loop(a, b):
    n = min(len(a), len(b))
    got = series_mul(S(*a), S(*b), n).components[0]
    assert list(got) == convolve(a, b, n)


@given(st.lists(st.integers(-(10**30), 10**30), min_size=1, max_size=40), st.lists(st.integers(-(10**30), 10**30), min_size=1, max_size=40))
def test_integer_kernel_matches_double_loop(a, b):
    n = min(len(a), len(b))
    assert int_mul_trunc(a, b, n) == [int(x) for x in convolve([Fraction(x) for x in a], [Fraction(x) for x in b], n)]


def test_mul_is_deterministic():
    rng = random.Random(5)
    a = S(*[Fraction(rng.randint(-9, 9), rng.randint(1, 9)) for _ in range(20)])
    assert series_mul(a, a, 20) == series_mul(a, a, 20)


# --- integration ---------------------------------------------------------------


def test_integrate_examples():
    assert series_integrate(S(1, 1)) == S(0, 1, Fraction(1, 2))
    assert series_integrate(S(0)) == S(0, 0)
    assert series_integrate(S(1, 1, 1, 1, 1)).components[0] == (0,) + tuple(Fraction(1, k) for k in range(1, 6))


@given(st.lists(rationals, min_size=1, max_size=24))
def test_integrate_then_differentiate(a):
    s = S(*a)
    assert series_integrate(s).derivative() == s


# --- composition -------------------------------------------------------------


def test_compose_examples():
    sq = Polynomial.from_dicts(1, [{(0, 2): 1}])
    assert poly_compose_series(sq, S(1, 1, 0), 3) == S(1, 2, 1)
    const = Polynomial.from_dicts(1, [{(0, 0): 7}])
    assert poly_compose_series(const, S(3, 1, 4), 3) == S(7, 0, 0)
    cubic = Polynomial.from_dicts(1, [{(0, 3): 1, (0, 1): -1}])
    assert poly_compose_series(cubic, S(0, 1, 0, 0), 4) == S(0, -1, 0, 1)


def test_compose_uses_absolute_time():
    # P = t * y expanded at center 2: (2 + s) * a(s)
    P = Polynomial.from_dicts(1, [{(1, 1): 1}])
    a = S(1, 1, 0, center=2)
    assert poly_compose_series(P, a, 3) == S(2, 3, 1, center=2)


@given(
    st.dictionaries(st.tuples(st.integers(0, 2), st.integers(0, 3)), rationals, max_size=5),
    st.lists(rationals, min_size=6, max_size=6),
)
def test_compose_matches_naive(terms, a):
    P = Polynomial.from_dicts(1, [terms])
    got = poly_compose_series(P, S(*a), 6).components[0]
    assert list(got) == compose_scalar({m: c for m, c in P.components[0]}, a, 6)


def test_compose_many_shares_results():
    P = Polynomial.from_dicts(2, [{(0, 1, 1): 1}, {(0, 0, 2): 2}])
    Q = Polynomial.from_dicts(2, [{(0, 2, 0): 1}, {(1, 0, 0): 1}])
    a = TruncatedSeries(0, ((1, 2, 3), (0, 1, 1)))
    many = poly_compose_many([P, Q], a, 3)
    assert many == [poly_compose_series(P, a, 3), poly_compose_series(Q, a, 3)]


# --- certified evaluation ------------------------------------------------------


def test_eval_exp_series():
    a = S(*taylor_exp(30))
    # 1/k! <= 8 / 2**k for every k, a radius-2 majorant
    tail = GeometricTail(Fraction(8), Fraction(2))
    (iv,) = eval_certified(a, tail, 1, 20)
    lo, hi = e_bounds()
    assert iv.contains(lo) and iv.contains(hi)
    assert iv.width <= Fraction(1, 2**20) + 2 * tail.bound(1, 30)


def test_eval_constant_and_geometric():
    (iv,) = eval_certified(S(Fraction(1, 3)), None, 5, 10)
    assert iv.contains(Fraction(1, 3)) and iv.width <= Fraction(1, 2**10)
    geo = S(*([1] * 60))
    (iv,) = eval_certified(geo, GeometricTail(Fraction(1), Fraction(1)), Fraction(1, 2), 20)
    assert iv.contains(2)


def test_eval_outside_radius():
    with pytest.raises(RadiusError):
        eval_certified(S(1, 1), GeometricTail(Fraction(1), Fraction(1)), 1, 10)


@given(st.fractions(min_value=-Fraction(9, 10), max_value=Fraction(9, 10), max_denominator=1000))
def test_eval_geometric_contains_closed_form(t):
    geo = S(*([1] * 40))
    (iv,) = eval_certified(geo, GeometricTail(Fraction(1), Fraction(1)), t, 30)
    assert iv.contains(1 / (1 - t))


@given(st.fractions(min_value=-2, max_value=2, max_denominator=1000))
def test_eval_exp_contains_value(t):
    import mpmath

    a = S(*taylor_exp(40))
    (iv,) = eval_certified(a, GeometricTail(Fraction(math.ceil(math.exp(4)) + 1), Fraction(4)), t, 30)
    val = mpmath.exp(mpmath.mpf(t.numerator) / t.denominator)
    lo, hi = iv.lo.to_fraction(), iv.hi.to_fraction()
    assert mpmath.mpf(lo.numerator) / lo.denominator <= val <= mpmath.mpf(hi.numerator) / hi.denominator


@given(st.lists(rationals, min_size=1, max_size=6), rationals)
def test_eval_polynomial_exact(coeffs, t):
    (iv,) = eval_certified(S(*coeffs), None, t, 16)
    value = sum(c * t**k for k, c in enumerate(coeffs))
    assert iv.contains(value) and iv.width <= Fraction(1, 2**16)
