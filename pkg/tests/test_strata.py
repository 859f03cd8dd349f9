import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odestrata.domain import RectDomain
from odestrata.errors import DomainError, PartialSolutionError, UnsupportedError
from odestrata.euler import extend_maximal
from odestrata.problem import parse_expression, parse_layout
from odestrata.regularity import classify_stratum
from odestrata.strata import (
    BreakPoint,
    Breaks,
    BreakTower,
    LayeredSet,
    PiecewiseField,
    Span,
    Tower,
    TowerSlot,
    continuity_intervals,
    derived_rank,
    discontinuity_set,
    resolution_floor,
    solve_stratified,
)

from oracles import float_euler, sample_labels

DOM = RectDomain(0, 1, [(-2, 2)])
HALF = Fraction(1, 2)


def pw(layout, pieces=("1", "-1"), y0=(0,), dom=DOM):
    exprs = tuple((parse_expression(p, dom.dim),) for p in pieces)
    breaks = parse_layout(layout) if isinstance(layout, str) else layout
    return PiecewiseField(breaks, exprs, dom, 0, y0)


CONTINUOUS = pw("0 point(1/2, 0) 0")
STEP = pw(Breaks((BreakPoint(HALF, 1),), (0, 1)))
SQUARE_WAVE = pw(Breaks((BreakTower(0, 1, None, 1, 0, (TowerSlot(0, 1), TowerSlot(1, 0))),), (None, None)))
GEOMETRIC = pw("- tower(0, 1, 1/2, 1, 0: [0 1] [1 0]) 1")
NESTED = pw(
    "- tower(0, 1, 1/2, 1, 0: [0 {tower(0, 1/8, 1/2, 1, 0: [0 1] [1 0])}] "
    "[1 {tower(0, 1/8, 1/2, 1, 1: [1 0] [0 1])}]) 1"
)
FIXTURES = {"continuous": CONTINUOUS, "step": STEP, "square": SQUARE_WAVE, "geometric": GEOMETRIC, "nested": NESTED}


def harmonic_set():
    """``{0} u {1/n : n >= 1}``."""
    only = LayeredSet.points([0])
    return LayeredSet((Tower(0, 1, None, 1, True, only, (only,)),))


# --- layered sets ------------------------------------------------------------------


def test_layered_set_basics():
    K = LayeredSet.points([Fraction(3, 4), Fraction(1, 4)])
    assert K.depth == 1 and K.bounds() == (Fraction(1, 4), Fraction(3, 4))
    assert K.contains(Fraction(1, 4)) and not K.contains(HALF)
    assert K.issubset(LayeredSet.interval(0, 1)) and not LayeredSet.interval(0, 1).issubset(K)
    assert LayeredSet().is_empty and not K.is_empty
    assert str(LayeredSet()) == "{}"


def test_tower_membership_and_closure():
    H = harmonic_set()
    assert H.depth == 2 and H.is_closed()
    assert all(H.contains(Fraction(1, n)) for n in (1, 2, 7, 1000)) and H.contains(0)
    assert not H.contains(Fraction(2, 3)) and not H.contains(Fraction(1, 1000) + Fraction(1, 10**7))
    assert H.bounds() == (0, 1)
    only = LayeredSet.points([0])
    open_tower = LayeredSet((Tower(0, 1, None, 1, False, only, (only,)),))
    assert not open_tower.is_closed()
    assert LayeredSet.points([0]).issubset(H) and H.issubset(LayeredSet.interval(0, 1))
    assert not H.issubset(LayeredSet.points([0]))


def test_tower_validation():
    only = LayeredSet.points([0])
    with pytest.raises(DomainError):
        Tower(0, 1, Fraction(3, 2), 1, True, only, (only,))
    with pytest.raises(DomainError):
        Tower(0, 1, None, 0, True, only, (only,))
    with pytest.raises(DomainError):
        Tower(0, 1, None, 1, True, LayeredSet.points([HALF]), (only,))


def test_enumerate_truncates_at_floor():
    items = harmonic_set().enumerate(Fraction(1, 2**10))
    points = [it for it in items if it[0] == "point"]
    stubs = [it for it in items if it[0] == "stub"]
    # members 1/1 .. 1/1024 plus the anchor
    assert len(points) == 1025 and points[0] == ("point", 0) and len(stubs) == 1
    assert stubs[0][1] == 0 and stubs[0][2] < Fraction(1, 2**10)
    assert [it[1] for it in items] == sorted(it[1] for it in items)


def test_resolution_floor_environment(monkeypatch):
    assert resolution_floor() == Fraction(1, 2**10)
    monkeypatch.setenv("STRATA_RESOLUTION_FLOOR", "1/32")
    assert resolution_floor() == Fraction(1, 32)
    monkeypatch.setenv("STRATA_RESOLUTION_FLOOR", "-1")
    with pytest.raises(DomainError):
        resolution_floor()


# --- piecewise fields ------------------------------------------------------------------


def test_label_lookup():
    assert [STEP.label_at(t) for t in (0, Fraction(49, 100), HALF, 1)] == [0, 0, 1, 1]
    # square wave: [1/(n+1), 1/n) alternates, starting with label 0 on [1/2, 1)
    assert [SQUARE_WAVE.label_at(Fraction(1, n)) for n in (2, 3, 4, 5)] == [0, 1, 0, 1]
    assert SQUARE_WAVE.label_at(Fraction(7, 10)) == 0 and SQUARE_WAVE.label_at(Fraction(2, 5)) == 1
    with pytest.raises(DomainError):
        STEP.label_at(2)


def test_piecewise_validation():
    with pytest.raises(DomainError):
        pw("0 point(1/2, 3) 1")
    with pytest.raises(DomainError):
        pw("0 point(2, 1) 1")
    with pytest.raises(DomainError):
        pw("- point(1/2, 1) 1")
    with pytest.raises(UnsupportedError):
        pw("- tower(0, 1, 1/2, 1, 0: [0 1] [1 0]) 1", pieces=("t", "1"))


# --- discontinuity sets and ranks --------------------------------------------------------


def test_discontinuity_examples():
    whole = LayeredSet.interval(0, 1)
    assert discontinuity_set(CONTINUOUS, whole).is_empty
    step_set = discontinuity_set(STEP, whole)
    assert step_set.contains(HALF) and step_set.bounds() == (HALF, HALF)
    D = discontinuity_set(SQUARE_WAVE, harmonic_set())
    assert D.contains(0) and D.bounds() == (0, 0)


def test_square_wave_oracle_by_sampling():
    # values along K = {1/n} alternate, so no limit at 0 exists
    labels = sample_labels(SQUARE_WAVE.label_at, [Fraction(1, n) for n in range(1000, 1100)])
    assert set(labels) == {0, 1}
    assert all(a != b for a, b in zip(labels, labels[1:]))
    # each 1/n is isolated in K: the neighbours 1/(n±1) are a positive distance away
    D = discontinuity_set(SQUARE_WAVE, harmonic_set())
    assert not any(D.contains(Fraction(1, n)) for n in range(1, 200))


def test_discontinuity_on_points_is_empty():
    assert discontinuity_set(STEP, LayeredSet.points([HALF])).is_empty


def test_discontinuity_rejects_partial_interval():
    with pytest.raises(UnsupportedError):
        discontinuity_set(STEP, LayeredSet.interval(0, HALF))


@pytest.mark.parametrize(
    "name, rank",
    [("continuous", 1), ("step", 2), ("square", 3), ("geometric", 3), ("nested", 4)],
)
def test_rank_fixtures(name, rank):
    cert = derived_rank(FIXTURES[name])
    assert cert.rank == rank and len(cert.chain) == rank + 1
    assert cert.chain[-1].is_empty and not cert.chain[-2].is_empty
    assert cert.is_nested() and cert.is_closed()


def test_rank_chain_of_square_wave():
    cert = derived_rank(SQUARE_WAVE)
    full, breaks, acc, empty = cert.chain
    assert full.span == (0, 1)
    assert all(breaks.contains(Fraction(1, n)) for n in range(1, 50)) and breaks.contains(0)
    assert acc.bounds() == (0, 0) and empty.is_empty


def test_rank_bound():
    cert = derived_rank(NESTED, 3)
    assert cert.rank is None and cert.exceeds_bound
    with pytest.raises(DomainError):
        derived_rank(STEP, 5)


@settings(max_examples=30)
@given(st.lists(st.integers(1, 63), min_size=1, max_size=6, unique=True), st.data())
def test_finite_jumps_have_rank_two(xs, data):
    xs = sorted(Fraction(x, 64) for x in xs)
    # alternate gap labels so every point is a genuine jump
    gaps = tuple(i % 2 for i in range(len(xs) + 1))
    comps = tuple(BreakPoint(x, data.draw(st.integers(0, 1))) for x in xs)
    cert = derived_rank(pw(Breaks(comps, gaps)))
    assert cert.rank == 2 and cert.is_nested() and cert.is_closed()
    assert all(cert.chain[1].contains(x) for x in xs)


def test_removable_point_is_still_a_discontinuity():
    f = pw("0 point(1/2, 1) 0")
    cert = derived_rank(f)
    assert cert.rank == 2 and cert.chain[1].contains(HALF)


def test_equal_pieces_are_continuous():
    f = pw("0 point(1/2, 1) 1", pieces=("y", "y"))
    assert derived_rank(f).rank == 1


# --- continuity intervals ------------------------------------------------------------------


def test_continuity_interval_examples():
    whole = LayeredSet.interval(0, 1)
    assert continuity_intervals(whole, LayeredSet.points([HALF])) == [Span(0, HALF), Span(HALF, 1)]
    assert continuity_intervals(whole, LayeredSet()) == [Span(0, 1)]
    spans = continuity_intervals(whole, harmonic_set(), Fraction(1, 2**10))
    assert len(spans) == 1025
    assert spans[0].stub and spans[0].lo == 0
    regular = spans[1:]
    assert not any(s.stub for s in regular)
    assert [(s.lo, s.hi) for s in regular] == [(Fraction(1, n + 1), Fraction(1, n)) for n in range(1024, 0, -1)]


def test_continuity_intervals_follow_env_floor(monkeypatch):
    monkeypatch.setenv("STRATA_RESOLUTION_FLOOR", "1/32")
    spans = continuity_intervals(LayeredSet.interval(0, 1), harmonic_set())
    assert len(spans) == 33 and spans[0].stub


def test_continuity_intervals_restricted_level():
    cert = derived_rank(SQUARE_WAVE)
    spans = continuity_intervals(cert.chain[1], cert.chain[2], Fraction(1, 2**4))
    assert spans and all(s.lo >= 0 and s.hi <= 1 for s in spans)
    assert spans[0].lo == 0


# --- stratified solve ---------------------------------------------------------------------


def reference(slope, k=2**20):
    return float_euler(slope, 0.0, 0.0, 1.0, k)


def sup_gap(poly, ref_h, ref):
    worst = 0.0
    for t, (v,) in zip(poly.times, poly.values):
        i = round(float(t) / ref_h)
        worst = max(worst, abs(float(v) - ref[i]))
    return worst


def test_step_field_glue():
    sol = solve_stratified(STEP)
    poly = sol.polygon
    assert sol.certificate.rank == 2 and sol.stub_error == 0
    assert poly.value_at(HALF) == (HALF,) and poly.final == (0,)
    for t in (Fraction(1, 8), Fraction(3, 8), Fraction(5, 8), Fraction(7, 8)):
        assert poly.value_at(t) == ((t if t <= HALF else 1 - t),)
    h, ref = reference(lambda t, y: 1.0 if t < 0.5 else -1.0)
    assert sup_gap(poly, h, ref) <= 10 * float(poly.mesh_width)


def test_glue_points_are_continuous():
    for f in (STEP, SQUARE_WAVE):
        poly = solve_stratified(f).polygon
        # one shared node per breakpoint: the polygon has no repeated times
        assert list(poly.times) == sorted(set(poly.times))
        assert poly.times[0] == 0 and poly.times[-1] == 1


def test_square_wave_zigzag():
    sol = solve_stratified(SQUARE_WAVE, floor=Fraction(1, 2**10))
    assert sol.certificate.rank == 3
    assert sol.stub_error == Fraction(1, 1025)

    def slope(t, y):
        if t == 0:
            return 1.0
        n = int(1 / t)
        return 1.0 if n % 2 == 1 else -1.0

    h, ref = reference(slope)
    assert sup_gap(sol.polygon, h, ref) <= 10 * float(sol.polygon.mesh_width) + float(sol.stub_error)


def test_equation_residual_off_breaks():
    rng = random.Random(7)
    for f in (STEP, SQUARE_WAVE):
        sol = solve_stratified(f)
        poly = sol.polygon
        stub_end = sol.spans[0].hi if sol.spans[0].stub else Fraction(0)
        slopes = poly.slopes()
        checked = 0
        while checked < 1000:
            t = Fraction(rng.randint(1, 10**6), 10**6)
            if t <= stub_end:
                continue
            i = max(j for j, s in enumerate(poly.times) if s <= t)
            if i == len(slopes) or poly.times[i] == t:
                continue
            # the node interval [times[i], times[i+1]] lies inside one continuity interval
            (s,) = slopes[i]
            (want,) = f.evaluate(poly.times[i], poly.values[i])
            assert want.lo - poly.slope_error <= s <= want.hi + poly.slope_error
            checked += 1


def test_continuous_field_matches_extend_maximal():
    f = pw("0 point(1/2, 0) 0", pieces=("-y + t", "1"), y0=(1,))
    sol = solve_stratified(f)
    ext = extend_maximal(f.piece_field(0), 0, (1,))
    assert sol.certificate.rank == 1 and sol.polygon == ext.polygon


def test_partial_solution_when_leaving_box():
    f = pw("0 point(1/2, 1) 1", pieces=("1", "8"))
    with pytest.raises(PartialSolutionError) as info:
        solve_stratified(f)
    assert HALF <= info.value.reached < 1


def test_solve_needs_rank_within_bound():
    with pytest.raises(UnsupportedError):
        solve_stratified(NESTED, 3)


def test_piecewise_state_dependent_pieces():
    f = pw("0 point(1/2, 1) 1", pieces=("y", "-y"), y0=(1,))
    sol = solve_stratified(f)
    mid = float(sol.polygon.value_at(HALF)[0])
    assert abs(mid - 1.6487212707) < 1e-3
    assert abs(float(sol.polygon.final[0]) - 1.0) < 2e-3


# --- classification of piecewise fields ---------------------------------------------------


def test_classify_piecewise():
    assert classify_stratum(STEP).stratum == "ATR0"
    assert classify_stratum(SQUARE_WAVE).parameters == {"rank": 3}
    assert classify_stratum(NESTED, rank_bound=3).stratum == "PI11CA0"
    assert classify_stratum(NESTED).stratum == "ATR0"
    assert classify_stratum(pw("0 point(1/2, 1) 1", pieces=("y", "y"))).stratum == "RCA0"
