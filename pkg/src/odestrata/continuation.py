"""Certified evaluation of polynomial IVP solutions by analytic continuation.

Each patch re-expands the solution at the current time, certifies a lower
bound ``R`` on its radius of convergence from a bound on ``P`` over a box,
steps by ``theta * R`` and carries the value forward as a dyadic midpoint
plus a radius.  The radius collects three terms: midpoint rounding, the
geometric Taylor tail, and the growth of the inherited radius under the
flow (``w * exp(L * step)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import BoundaryError, ContinuationStalled, DomainError, PrecisionUnreachable, RadiusError
from .polyivp import PolyIVP, newton_solve
from .series import Dyadic, Interval, Polynomial, as_rational
from .transcendental import exp_upper

THETA = Fraction(1, 2)
DEFAULT_FLOOR = Fraction(1, 2**64)
_GRID_OCTAVES = 64
_RADIUS_BITS = 16


@dataclass(frozen=True)
class RadiusCertificate:
    """Box of radius ``box`` around the centre on which ``|P| <= bound``.

    ``radius`` is the certified lower bound on the radius of convergence of
    every solution starting in the centre's enclosure, and ``lipschitz``
    bounds the sup-norm Lipschitz constant of ``P`` in ``y`` on the box.
    """

    radius: Fraction
    box: Fraction
    bound: Fraction
    lipschitz: Fraction


@dataclass(frozen=True)
class Patch:
    center: Fraction
    value: tuple  # Interval per component
    radius_lb: Fraction
    order: int
    step: Fraction


@dataclass(frozen=True)
class ContinuationTrace:
    patches: tuple
    value: tuple  # Interval per component
    precision: int

    @property
    def count(self) -> int:
        return len(self.patches)


def _box_bounds(shifted: Polynomial, r: Fraction) -> tuple[Fraction, Fraction]:
    """Bounds on ``|P|`` and on the y-Lipschitz constant over the sup-norm box of radius ``r``."""
    M = L = Fraction(0)
    for comp in shifted.components:
        m_i = l_i = Fraction(0)
        for mono, c in comp:
            deg = sum(mono)
            m_i += abs(c) * r**deg
            ey = deg - mono[0]
            if ey:
                l_i += abs(c) * ey * r ** (deg - 1)
        M, L = max(M, m_i), max(L, l_i)
    return M, L


def _grid(r_max: Fraction) -> list[Fraction]:
    top = math.ceil(math.log2(r_max.numerator) - math.log2(r_max.denominator)) + 1
    out = {r_max}
    for j in range(top, min(top, 0) - _GRID_OCTAVES, -1):
        base = Fraction(2) ** j
        for i in range(4):
            r = base * (1 + Fraction(i, 4))
            if r <= r_max:
                out.add(r)
    return sorted(out)


def _round_down(q: Fraction, bits: int = _RADIUS_BITS) -> Fraction:
    if q <= 0:
        return Fraction(0)
    e = q.numerator.bit_length() - q.denominator.bit_length()
    return Dyadic.round(q, bits - e, "floor").to_fraction()


def radius_certificate(ivp: PolyIVP, tc, yc: Sequence, w=0) -> RadiusCertificate:
    """Best grid certificate for solutions through ``(tc, y)`` with ``|y - yc| <= w``."""
    tc, w = as_rational(tc), as_rational(w)
    yc = tuple(as_rational(v) for v in yc)
    dom = ivp.domain
    if not dom.contains(tc, yc):
        raise DomainError(f"({tc}, {yc}) lies outside the domain")
    r_max = dom.space_distance(yc)
    if r_max <= w:
        raise BoundaryError(f"no admissible box around {yc}: boundary distance {r_max} <= {w}")
    if ivp.P.is_zero:
        horizon = dom.t_end - tc
        if horizon <= 0:
            raise BoundaryError(f"t={tc} is on the end of the time interval")
        return RadiusCertificate(horizon, r_max, Fraction(0), Fraction(0))
    shifted = ivp.P.shifted(tc, yc)
    autonomous = ivp.P.is_autonomous
    # the box is chosen in floating point; only the chosen one is certified
    absolute = [[(float(abs(c)), sum(mono)) for mono, c in comp] for comp in shifted.components]
    fw = float(w)
    best, best_r = -1.0, r_max
    for r in _grid(r_max):
        if r <= w:
            continue
        fr = float(r)
        try:
            M = max(sum(c * fr**deg for c, deg in comp) for comp in absolute)
            R = (fr - fw) / M if M else math.inf
        except (OverflowError, ZeroDivisionError):
            continue
        if not autonomous:
            R = min(R, fr)
        if R > best:
            best, best_r = R, r
    M, L = _box_bounds(shifted, best_r)
    R = (best_r - w) / M
    if not autonomous:
        R = min(R, best_r)
    return RadiusCertificate(_round_down(R), best_r, M, L)


def _round_up(q: Fraction, bits: int = 8) -> Fraction:
    e = q.numerator.bit_length() - q.denominator.bit_length()
    return Dyadic.round(q, bits - e, "ceil").to_fraction()


def _flow_lipschitz(ivp: PolyIVP, tc, yc, w: Fraction, step: Fraction, cert: RadiusCertificate) -> Fraction:
    """Lipschitz bound on a small box that provably holds every trajectory of the patch.

    If ``w + step * M(r) <= r`` no solution starting within ``w`` of the
    centre can leave the radius-``r`` box before ``step``; the bound over
    the whole certificate box is the fallback.
    """
    if w == 0 or cert.lipschitz == 0:
        return cert.lipschitz
    shifted = ivp.P.shifted(tc, yc)
    M0 = max((abs(c) for comp in shifted.components for mono, c in comp if not any(mono)), default=Fraction(0))
    r = _round_up(max(step, 2 * (w + step * M0)))
    while r < cert.box:
        M, L = _box_bounds(shifted, r)
        if w + step * M <= r:
            return min(L, cert.lipschitz)
        r *= 2
    return cert.lipschitz


def _centre(at) -> tuple[Fraction, tuple, Fraction]:
    tc, ys = at
    mids, w = [], Fraction(0)
    for y in ys:
        if isinstance(y, Interval):
            mids.append(y.mid)
            w = max(w, y.width / 2)
        else:
            mids.append(as_rational(y))
    return as_rational(tc), tuple(mids), w


def certified_radius_lb(ivp: PolyIVP, at) -> Fraction:
    """Certified lower bound on the radius of convergence at ``at = (t_c, y_c)``.

    ``y_c`` entries may be rationals or ``Interval`` enclosures.
    """
    tc, mids, w = _centre(at)
    return radius_certificate(ivp, tc, mids, w).radius


def truncation_order(R_lb, step, n: int, M) -> int:
    """Least ``N >= 1`` with ``M q**N / (1 - q) <= 2**-(n+1)`` where ``q = step / R_lb``."""
    R_lb, step, M = as_rational(R_lb), as_rational(step), as_rational(M)
    if step >= R_lb:
        raise RadiusError(f"step {step} is not inside the radius {R_lb}")
    if step < 0:
        raise DomainError("step must be non-negative")
    target = Fraction(1, 2 ** (n + 1))
    if step == 0 or M == 0:
        return 1
    q = step / R_lb

    def ok(N: int) -> bool:
        return M * q**N / (1 - q) <= target

    # float estimate, then exact correction
    est = (math.log(M) - math.log(1 - q) + (n + 1) * math.log(2)) / -math.log(q)
    N = max(1, math.ceil(est) - 1)
    while N > 1 and ok(N - 1):
        N -= 1
    while not ok(N):
        N += 1
    return N


class _BudgetExceeded(Exception):
    def __init__(self, radius: Fraction):
        self.radius = radius


def _continue_at(
    ivp: PolyIVP, T: Fraction, p: int, floor: Fraction, theta: Fraction, budget: Fraction | None = None
) -> ContinuationTrace:
    t, mid, w = ivp.t0, ivp.y0, Fraction(0)
    patches = []
    grid = p + 2
    while t < T:
        try:
            cert = radius_certificate(ivp, t, mid, w)
        except BoundaryError:
            if not patches:
                raise
            raise ContinuationStalled("solution reached the edge of the domain box", t) from None
        if cert.radius < floor:
            raise ContinuationStalled(f"certified radius {cert.radius} fell below the floor {floor}", t)
        step = min(theta * cert.radius, T - t)
        N = truncation_order(cert.radius, step, p, cert.box)
        local = ivp if t == ivp.t0 and mid == ivp.y0 else PolyIVP(ivp.P, t, mid, ivp.domain)
        series, _ = newton_solve(local, N)
        values = series.evaluate(t + step)
        q = step / cert.radius
        tail = cert.box * q**N / (1 - q)
        grown = w * exp_upper(_flow_lipschitz(ivp, t, mid, w, step, cert) * step) if w else Fraction(0)
        enclosure = tuple(Interval.enclose(m - w, m + w, grid) for m in mid)
        patches.append(Patch(t, enclosure, cert.radius, N, step))
        new_mid = tuple(Dyadic.round(v, grid, "nearest").to_fraction() for v in values)
        slack = max(abs(v - m) for v, m in zip(values, new_mid))
        w = Dyadic.round(slack + tail + grown, grid + 2, "ceil").to_fraction()
        t, mid = t + step, new_mid
        # the radius never shrinks, so a run that already overshot cannot recover
        if budget is not None and 2 * w > budget:
            raise _BudgetExceeded(w)
    value = tuple(Interval.enclose(m - w, m + w, grid) for m in mid)
    return ContinuationTrace(tuple(patches), value, p)


def continue_to(
    ivp: PolyIVP,
    T,
    n: int,
    *,
    floor=DEFAULT_FLOOR,
    theta=THETA,
    max_precision: int | None = None,
) -> ContinuationTrace:
    """Enclose ``y(T)`` in intervals of width at most ``2**-n``.

    The whole continuation is rerun at a higher working precision until the
    accumulated radius fits the budget.
    """
    T, floor, theta = as_rational(T), as_rational(floor), as_rational(theta)
    if not ivp.t0 <= T <= ivp.domain.t_end:
        raise DomainError(f"target {T} is outside [{ivp.t0}, {ivp.domain.t_end}]")
    if not 0 < theta < 1:
        raise DomainError("step fraction must lie in (0, 1)")
    if n < 0:
        raise DomainError("precision must be non-negative")
    budget = Fraction(1, 2**n)
    cap = max_precision or max(4096, 16 * (n + 8))
    p = min(n + 8, cap)
    best = None
    while p <= cap:
        try:
            trace = _continue_at(ivp, T, p, floor, theta, budget)
        except _BudgetExceeded as exc:
            width = 2 * exc.radius
        else:
            width = max(iv.width for iv in trace.value)
            if width <= budget:
                return trace
        best = width if best is None else min(best, width)
        # rerun with the missing bits plus a margin
        missing = (width / budget).numerator.bit_length() - (width / budget).denominator.bit_length() + 1
        p += max(missing + 8, p // 2)
    raise PrecisionUnreachable(f"enclosure width 2^-{n} not reached below {cap} working bits", best)
