import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from odestrata.domain import RectDomain
from odestrata.errors import DomainError
from odestrata.polyivp import (
    PolyIVP,
    linear_series_solve,
    newton_iterates,
    newton_solve,
    newton_step,
    picard_iterates,
    picard_solve,
    picard_step,
    residual_valuation,
)
from odestrata.series import Polynomial, TruncatedSeries

from oracles import tan_coefficients, taylor_exp

BOX = RectDomain(-1, 1, [(-100, 100)])
BOX2 = RectDomain(-1, 1, [(-100, 100), (-100, 100)])


def scalar_ivp(terms, y0=1, t0=0):
    return PolyIVP(Polynomial.from_dicts(1, [terms]), t0, (y0,), BOX)


EXP = scalar_ivp({(0, 1): 1})
SQUARE = scalar_ivp({(0, 2): 1})
TAN = scalar_ivp({(0, 0): 1, (0, 2): 1}, y0=0)


def S(*c, center=0):
    return TruncatedSeries.scalar([Fraction(x) for x in c], center)


def coeffs(series):
    return list(series.components[0])


@st.composite
def ivps(draw):
    """Random polynomial IVPs with degree <= 3 and dimension <= 2."""
    d = draw(st.integers(1, 2))
    comps = []
    for _ in range(d):
        terms = {}
        for _ in range(draw(st.integers(1, 3))):
            mono = [draw(st.integers(0, 1))] + [0] * d
            for _ in range(draw(st.integers(0, 3 - mono[0]))):
                mono[1 + draw(st.integers(0, d - 1))] += 1
            terms[tuple(mono)] = Fraction(draw(st.integers(-3, 3)), draw(st.integers(1, 3)))
        comps.append(terms)
    y0 = tuple(Fraction(draw(st.integers(-2, 2)), draw(st.integers(1, 2))) for _ in range(d))
    t0 = Fraction(draw(st.integers(-1, 1)), 2)
    return PolyIVP(Polynomial.from_dicts(d, comps), t0, y0, BOX if d == 1 else BOX2)


def test_ivp_validation():
    with pytest.raises(DomainError):
        PolyIVP(Polynomial.from_dicts(1, [{(0, 1): 1}]), 0, (1, 2), BOX)
    with pytest.raises(DomainError):
        PolyIVP(Polynomial.from_dicts(1, [{(0, 1): 1}]), 0, (1000,), BOX)


# --- Picard ------------------------------------------------------------------


def test_picard_step_examples():
    assert picard_step(EXP, S(1), 2) == S(1, 1)
    zero = scalar_ivp({}, y0=5)
    assert picard_step(zero, S(5, 3, 1), 3) == S(5, 0, 0)
    assert picard_step(SQUARE, S(1, 1, 0), 3) == S(1, 1, 1)


def test_picard_solve_examples():
    assert coeffs(picard_solve(EXP, 6)) == taylor_exp(6)
    assert coeffs(picard_solve(SQUARE, 6)) == [1] * 6
    time_only = scalar_ivp({(1, 0): 1}, y0=0)
    assert picard_solve(time_only, 3) == S(0, 0, Fraction(1, 2))


def test_picard_iterate_count():
    assert len(list(picard_iterates(SQUARE, 9))) == 9


def test_picard_valuation_example():
    assert residual_valuation(SQUARE, picard_solve(SQUARE, 8)).valuation >= 7


@given(ivps(), st.integers(2, 12))
def test_picard_gains_one_order(ivp, n):
    u = TruncatedSeries.constant(ivp.y0, n, ivp.t0)
    for _ in range(3):
        before = residual_valuation(ivp, u).valuation
        u = picard_step(ivp, u, n)
        after = residual_valuation(ivp, u).valuation
        assert after >= min(before + 1, n - 1)


# --- Newton ------------------------------------------------------------------


def test_newton_step_examples():
    assert newton_step(EXP, S(1, 1), 2) == S(1, 1, Fraction(1, 2), Fraction(1, 6))
    assert newton_step(SQUARE, S(1, 1), 2) == S(1, 1, 1, 1)
    exact = S(*taylor_exp(8))
    assert newton_step(EXP, exact.truncate(4), 4) == exact


def test_newton_solve_examples():
    series, steps = newton_solve(EXP, 1024)
    assert coeffs(series) == taylor_exp(1024)
    assert steps <= 12
    series, steps = newton_solve(EXP, 1)
    assert series == S(1) and steps <= 1
    series, _ = newton_solve(SQUARE, 256)
    assert series == picard_solve(SQUARE, 256)


def test_newton_constant_solution_shortcut():
    fixed = scalar_ivp({(0, 2): 1, (0, 1): -1}, y0=1)  # P(1) = 0
    series, steps = newton_solve(fixed, 16)
    assert steps == 0 and coeffs(series) == [1] + [0] * 15


@given(ivps(), st.integers(1, 5))
def test_newton_doubles(ivp, j):
    n_k = 2**j
    y = newton_solve(ivp, n_k)[0]
    lifted = newton_step(ivp, y, n_k)
    assert residual_valuation(ivp, lifted.padded(2 * n_k + 1)).valuation >= 2 * n_k - 1


@given(ivps(), st.integers(1, 40))
def test_newton_matches_picard(ivp, n):
    assert newton_solve(ivp, n)[0] == picard_solve(ivp, n)


def test_newton_step_count_bound():
    for n in (1, 2, 3, 5, 17, 100, 513):
        _, steps = newton_solve(SQUARE, n)
        assert steps <= math.ceil(math.log2(n)) + 2


def test_newton_iterates_report_doubling():
    seen = [n for _, n in newton_iterates(SQUARE, 64)]
    assert seen == [1, 2, 4, 8, 16, 32, 64]


def test_closed_forms_to_order_64():
    assert coeffs(newton_solve(EXP, 64)[0]) == taylor_exp(64)
    assert coeffs(newton_solve(SQUARE, 64)[0]) == [1] * 64
    assert coeffs(newton_solve(TAN, 64)[0]) == tan_coefficients(64)
    assert coeffs(picard_solve(TAN, 64)) == tan_coefficients(64)


def test_system_matches_scalar_pair():
    # y1' = y2, y2' = -y1 from (1, 0): (cos, -sin)
    P = Polynomial.from_dicts(2, [{(0, 0, 1): 1}, {(0, 1, 0): -1}])
    ivp = PolyIVP(P, 0, (1, 0), BOX2)
    s, _ = newton_solve(ivp, 12)
    cos = [Fraction((-1) ** (k // 2), math.factorial(k)) if k % 2 == 0 else 0 for k in range(12)]
    sin = [Fraction((-1) ** (k // 2), math.factorial(k)) if k % 2 == 1 else 0 for k in range(12)]
    assert list(s.components[0]) == cos and list(s.components[1]) == [-c for c in sin]


def test_non_autonomous_expansion_point():
    # y' = t y, y(1) = 1: y = exp((t^2 - 1) / 2)
    ivp = PolyIVP(Polynomial.from_dicts(1, [{(1, 1): 1}]), 1, (1,), BOX)
    s, _ = newton_solve(ivp, 5)
    assert s.center == 1
    assert s == picard_solve(ivp, 5)
    # y'(1) = 1, y''(1) = y + t y' = 2
    assert coeffs(s)[:3] == [1, 1, 1]


# --- linear solve and residuals ------------------------------------------------


def test_linear_series_solve_examples():
    zero = [[S(0, 0, 0, 0)]]
    one = [[S(1, 0, 0, 0)]]
    assert linear_series_solve(zero, S(1, 0, 0, 0), 4) == S(0, 1, 0, 0)
    assert linear_series_solve(one, S(0, 0, 0, 0), 4) == S(0, 0, 0, 0)
    assert linear_series_solve(one, S(1, 0, 0, 0), 4) == S(0, 1, Fraction(1, 2), Fraction(1, 6))


def test_linear_series_solve_rejects_mismatch():
    with pytest.raises(DomainError):
        linear_series_solve([[S(1, center=1)]], S(1, 0), 2)
    with pytest.raises(DomainError):
        linear_series_solve([[S(1)], [S(1)]], S(1, 0), 2)


def test_residual_examples():
    assert residual_valuation(SQUARE, S(1, 0, 0)).valuation == 0
    report = residual_valuation(SQUARE, S(1, 1, 1, 1, 1))
    assert report.valuation == report.checked == 4
    y = newton_step(SQUARE, S(1, 1), 2)
    assert residual_valuation(SQUARE, y).valuation >= 3
