import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odestrata.continuation import (
    certified_radius_lb,
    continue_to,
    radius_certificate,
    truncation_order,
)
from odestrata.domain import RectDomain
from odestrata.errors import BoundaryError, ContinuationStalled, DomainError, PrecisionUnreachable, RadiusError
from odestrata.polyivp import PolyIVP
from odestrata.series import Interval, Polynomial

from oracles import e_bounds, grid_radius

WIDE = [(-(2**64), 2**64)]


def ivp(terms, y0=1, t_end=1, box=None):
    return PolyIVP(Polynomial.from_dicts(1, [terms]), 0, (y0,), RectDomain(0, t_end, box or WIDE))


SQUARE = ivp({(0, 2): 1})
EXP = ivp({(0, 1): 1}, t_end=2)
TAN = ivp({(0, 0): 1, (0, 2): 1}, y0=0, t_end=Fraction(3, 2))


def as_mpf(q: Fraction):
    return mpmath.mpf(q.numerator) / q.denominator


def encloses(iv: Interval, value) -> bool:
    return as_mpf(iv.lo.to_fraction()) <= value <= as_mpf(iv.hi.to_fraction())


# --- radius ------------------------------------------------------------------


def test_radius_zero_field_is_time_horizon():
    zero = PolyIVP(Polynomial.from_dicts(1, [{}]), 0, (3,), RectDomain(0, 5, [(0, 10)]))
    assert certified_radius_lb(zero, (Fraction(2), (3,))) == 3


def test_radius_square_matches_grid_oracle():
    R = certified_radius_lb(SQUARE, (0, (1,)))
    oracle = grid_radius()
    assert oracle == Fraction(1, 4)
    # the package grid is finer than k/8, so it may only do better, never worse than rounding
    assert oracle * Fraction(255, 256) <= R <= oracle


def test_radius_exp_capped_by_box():
    small = ivp({(0, 1): 1}, box=[(-3, 5)])
    # r / (1 + r) with r <= 4 peaks at the box edge
    R = certified_radius_lb(small, (0, (1,)))
    assert Fraction(4, 5) * Fraction(255, 256) <= R <= Fraction(4, 5)


def test_radius_accepts_enclosures():
    iv = Interval.enclose(Fraction(1), Fraction(1), 20)
    assert certified_radius_lb(SQUARE, (0, (iv,))) == certified_radius_lb(SQUARE, (0, (1,)))
    wide = Interval.enclose(Fraction(1, 2), Fraction(3, 2), 20)
    assert certified_radius_lb(SQUARE, (0, (wide,))) < certified_radius_lb(SQUARE, (0, (1,)))


def test_radius_boundary_errors():
    edge = ivp({(0, 1): 1}, y0=2, box=[(-2, 2)])
    with pytest.raises(BoundaryError):
        certified_radius_lb(edge, (0, (2,)))
    with pytest.raises(DomainError):
        certified_radius_lb(SQUARE, (0, (2**70,)))


def test_radius_certificate_is_sound():
    cert = radius_certificate(SQUARE, 0, (1,))
    # |P| <= M on the box and R <= r / M
    assert cert.bound >= (1 + cert.box) ** 2
    assert cert.radius <= cert.box / cert.bound


# --- truncation order ----------------------------------------------------------


def tail(M, q, N):
    return M * q**N / (1 - q)


def test_truncation_order_examples():
    # least N with 2 * 2^-N <= 2^-11 is 12
    assert truncation_order(2, 1, 10, 1) == 12
    assert truncation_order(2, 1, 0, Fraction(1, 2)) == 1
    assert truncation_order(1, 0, 5, 3) == 1


def test_truncation_order_errors():
    with pytest.raises(RadiusError):
        truncation_order(1, 1, 10, 1)
    with pytest.raises(RadiusError):
        truncation_order(1, 2, 10, 1)


def test_truncation_order_grows_towards_radius():
    orders = [truncation_order(1, 1 - Fraction(1, 2**j), 20, 1) for j in range(1, 10)]
    assert orders == sorted(orders) and orders[-1] > orders[0] * 50


@given(
    st.fractions(min_value=Fraction(1, 100), max_value=Fraction(99, 100), max_denominator=200),
    st.integers(0, 80),
    st.fractions(min_value=Fraction(1, 64), max_value=64, max_denominator=64),
)
def test_truncation_order_is_least(q, n, M):
    N = truncation_order(1, q, n, M)
    target = Fraction(1, 2 ** (n + 1))
    assert tail(M, q, N) <= target
    assert N == 1 or tail(M, q, N - 1) > target


# --- continue_to -----------------------------------------------------------------


def test_square_at_nine_tenths():
    trace = continue_to(SQUARE, Fraction(9, 10), 30)
    (iv,) = trace.value
    assert iv.contains(10) and iv.width <= Fraction(1, 2**30)


def test_exp_at_one():
    trace = continue_to(EXP, 1, 30)
    (iv,) = trace.value
    lo, hi = e_bounds(60)
    assert iv.contains(lo) and iv.contains(hi) and iv.width <= Fraction(1, 2**30)


def test_square_stalls_at_pole():
    # a moderate box keeps the run short; the stall comes from the pole, not the target
    near_pole = ivp({(0, 2): 1}, box=[(-(2**12), 2**12)])
    with pytest.raises(ContinuationStalled) as info:
        continue_to(near_pole, 1, 10)
    assert Fraction(99, 100) < info.value.reached < 1


def test_stall_reports_box_exit():
    boxed = ivp({(0, 2): 1}, box=[(-16, 16)])
    with pytest.raises(ContinuationStalled) as info:
        continue_to(boxed, Fraction(99, 100), 10)
    assert info.value.reached <= Fraction(15, 16)


def test_target_validation():
    with pytest.raises(DomainError):
        continue_to(SQUARE, -1, 10)
    with pytest.raises(DomainError):
        continue_to(SQUARE, 2, 10)


def test_precision_cap():
    with pytest.raises(PrecisionUnreachable) as info:
        continue_to(EXP, 1, 200, max_precision=64)
    assert info.value.achievable is not None and info.value.achievable > Fraction(1, 2**200)


def test_trace_invariants():
    trace = continue_to(SQUARE, Fraction(99, 100), 20)
    centers = [p.center for p in trace.patches]
    assert centers == sorted(set(centers)) and centers[0] == 0
    for p in trace.patches:
        assert p.radius_lb > 0 and p.step <= p.radius_lb / 2
    assert trace.patches[-1].center + trace.patches[-1].step == Fraction(99, 100)


def test_target_at_start():
    trace = continue_to(SQUARE, 0, 10)
    assert trace.count == 0 and trace.value[0].contains(1)


def test_deterministic():
    assert continue_to(TAN, Fraction(3, 2), 24) == continue_to(TAN, Fraction(3, 2), 24)


def test_patch_counts_monotone():
    counts = [continue_to(SQUARE, T, 10).count for T in (Fraction(1, 2), Fraction(9, 10), Fraction(99, 100), Fraction(999, 1000))]
    assert counts == sorted(counts)


def test_enclosure_soundness_fifty_targets():
    rng = random.Random(20)
    problems = [
        (EXP, Fraction(2), mpmath.exp),
        (SQUARE, Fraction(99, 100), lambda t: 1 / (1 - t)),
        (TAN, Fraction(3, 2), mpmath.tan),
    ]
    for i in range(50):
        problem, t_max, exact = problems[i % 3]
        T = Fraction(rng.randint(1, 1000), 1000) * t_max
        n = rng.choice((10, 20, 40))
        (iv,) = continue_to(problem, T, n).value
        assert iv.width <= Fraction(1, 2**n)
        assert encloses(iv, exact(as_mpf(T)))


@settings(max_examples=15)
@given(st.fractions(min_value=0, max_value=Fraction(3, 2), max_denominator=97), st.integers(0, 40))
def test_width_contract(T, n):
    (iv,) = continue_to(TAN, T, n).value
    assert iv.width <= Fraction(1, 2**n) and encloses(iv, mpmath.tan(as_mpf(T)))


def test_system_enclosure():
    # y1' = y2, y2' = -y1 from (1, 0)
    P = Polynomial.from_dicts(2, [{(0, 0, 1): 1}, {(0, 1, 0): -1}])
    rot = PolyIVP(P, 0, (1, 0), RectDomain(0, 4, [(-4, 4), (-4, 4)]))
    c, s = continue_to(rot, 3, 30).value
    assert encloses(c, mpmath.cos(3)) and encloses(s, -mpmath.sin(3))
    assert max(c.width, s.width) <= Fraction(1, 2**30)


def test_exp_value_size_grows_with_target():
    small = continue_to(EXP, 1, 10).count
    big_ivp = ivp({(0, 1): 1}, t_end=16)
    big = continue_to(big_ivp, 16, 10)
    assert big.count > small
    assert math.isclose(float(big.value[0].mid), math.exp(16), rel_tol=1e-3)
