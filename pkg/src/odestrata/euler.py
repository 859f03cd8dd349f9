"""Left-endpoint Euler polygons with certified error bounds, and greedy maximal extension."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

from .domain import RectDomain
from .errors import (
    DomainError,
    DomainExitError,
    EvaluationError,
    NoUniquenessBoundError,
    PrecisionUnreachable,
    StallError,
)
from .expr import DEFAULT_PREC, Expr, QInterval, as_expr, point_value
from .regularity import ModulusSpec, modulus_upper, osgood_diverges, osgood_gap_bound
from .series import Dyadic, Polynomial, as_rational

BOUND_DEPTH = 3
EXACT_MESH_LIMIT = 2**12
MESH_CAP = 2**16
EXTENSION_STEP = Fraction(1, 2**12)
EXTENSION_FLOOR = Fraction(1, 2**40)
EXIT_TOLERANCE = Fraction(1, 2**20)
EXTENSION_PREC = 48


@dataclass(frozen=True)
class FieldSpec:
    """Right-hand side ``f(t, y)`` given by one expression per component."""

    components: tuple
    domain: RectDomain
    modulus: ModulusSpec | None = None
    bound: Fraction | None = None
    t0: Fraction | None = None
    y0: tuple | None = None

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) != self.domain.dim:
            raise DomainError(f"{len(comps)} components for a {self.domain.dim}-dimensional box")
        if any(c.max_var() > self.dim for c in comps):
            raise DomainError("expression refers to a state variable beyond the dimension")
        if self.bound is not None:
            object.__setattr__(self, "bound", as_rational(self.bound))
        if self.t0 is not None:
            object.__setattr__(self, "t0", as_rational(self.t0))
        if self.y0 is not None:
            y0 = tuple(as_rational(v) for v in self.y0)
            if len(y0) != self.dim:
                raise DomainError("initial value has the wrong dimension")
            object.__setattr__(self, "y0", y0)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def initial(self, t0=None, y0=None) -> tuple[Fraction, tuple]:
        t0 = as_rational(t0) if t0 is not None else (self.t0 if self.t0 is not None else self.domain.t_start)
        y0 = y0 if y0 is not None else self.y0
        if y0 is None:
            raise DomainError("no initial value given")
        y0 = tuple(as_rational(v) for v in y0)
        if not self.domain.contains(t0, y0):
            raise DomainError(f"initial point ({t0}, {y0}) lies outside the domain")
        return t0, y0

    def as_polynomial(self) -> Polynomial | None:
        polys = [c.polynomial(self.dim) for c in self.components]
        if any(p is None for p in polys):
            return None
        return Polynomial.from_dicts(self.dim, polys)

    @property
    def depends_on_state(self) -> bool:
        return any(c.depends_on_state() for c in self.components)

    @property
    def depends_on_time(self) -> bool:
        return any(c.depends_on(0) for c in self.components)

    @property
    def piecewise_affine(self) -> bool:
        return all(c.y_degree() in (0, 1) and not c.has_sqrt for c in self.components)

    def slope(self, t, y, prec: int = DEFAULT_PREC) -> tuple[QInterval, ...]:
        return tuple(point_value(c, t, y, prec) for c in self.components)


def _pieces(lo: Fraction, hi: Fraction, n: int) -> list[QInterval]:
    if lo == hi:
        return [QInterval(lo, hi)]
    step = (hi - lo) / n
    return [QInterval(lo + i * step, lo + (i + 1) * step) for i in range(n)]


def _boxes(t_lo, t_hi, box, depth: int, state_vars: Sequence[bool], time_var: bool):
    n = 2**depth
    axes = [_pieces(t_lo, t_hi, n if time_var else 1)]
    for (lo, hi), used in zip(box, state_vars):
        axes.append(_pieces(lo, hi, n if used else 1))
    return itertools.product(*axes)


def box_bound(f: FieldSpec, t_lo, t_hi, box, depth: int = BOUND_DEPTH) -> Fraction:
    """Sup-norm bound of ``f`` over ``[t_lo, t_hi] x box`` by subdivided interval evaluation."""
    used = [any(c.depends_on(j) for c in f.components) for j in range(1, f.dim + 1)]
    M = Fraction(0)
    for env in _boxes(as_rational(t_lo), as_rational(t_hi), box, depth, used, f.depends_on_time):
        for c in f.components:
            M = max(M, c.interval(env).magnitude())
    return M


def field_bound(f: FieldSpec, depth: int = BOUND_DEPTH) -> Fraction:
    """``M >= sup ||f||_inf`` over the rectangle (the declared bound if one is given)."""
    if f.bound is not None:
        return f.bound
    d = f.domain
    return box_bound(f, d.t_start, d.t_end, d.box, depth)


def time_lipschitz(f: FieldSpec, depth: int = BOUND_DEPTH) -> Fraction:
    """Bound on ``|df/dt|`` over the rectangle; raises ``EvaluationError`` if none is certifiable."""
    if not f.depends_on_time:
        return Fraction(0)
    d = f.domain
    used = [any(c.depends_on(j) for c in f.components) for j in range(1, f.dim + 1)]
    L = Fraction(0)
    for env in _boxes(d.t_start, d.t_end, d.box, depth, used, True):
        for c in f.components:
            _, deriv = c.derivative(list(env), 0)
            L = max(L, deriv.magnitude())
    return L


def safe_time_horizon(M, r, remaining=None) -> Fraction:
    """``min(r / M, remaining)``: polygons with slopes bounded by ``M`` stay in the ball of radius ``r``."""
    M, r = as_rational(M), as_rational(r)
    if r <= 0 or M < 0:
        raise DomainError("need M >= 0 and r > 0")
    horizon = r / M if M > 0 else None
    if remaining is None:
        if horizon is None:
            raise DomainError("M = 0 with no time limit gives an unbounded horizon")
        return horizon
    remaining = as_rational(remaining)
    return remaining if horizon is None else min(horizon, remaining)


@dataclass(frozen=True)
class Polygon:
    """Piecewise-linear approximant through ``(times[i], values[i])``.

    ``slope_error`` bounds the distance between each sampled slope and the
    exact value of ``f`` at the left mesh point; ``error_bound`` (when set)
    bounds the sup-distance to the true solution.
    """

    times: tuple
    values: tuple
    error_bound: Fraction | None = None
    slope_error: Fraction = Fraction(0)

    @property
    def k(self) -> int:
        return len(self.times) - 1

    @property
    def start(self) -> Fraction:
        return self.times[0]

    @property
    def end(self) -> Fraction:
        return self.times[-1]

    @property
    def final(self) -> tuple:
        return self.values[-1]

    @property
    def mesh_width(self) -> Fraction:
        return max((b - a for a, b in zip(self.times, self.times[1:])), default=Fraction(0))

    def value_at(self, t) -> tuple:
        t = as_rational(t)
        if not self.start <= t <= self.end:
            raise DomainError(f"t={t} is outside [{self.start}, {self.end}]")
        lo, hi = 0, len(self.times) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.times[mid] <= t:
                lo = mid
            else:
                hi = mid
        a, b = self.times[lo], self.times[hi]
        if t == a or a == b:
            return self.values[lo]
        s = (t - a) / (b - a)
        return tuple(u + s * (v - u) for u, v in zip(self.values[lo], self.values[hi]))

    def sup_distance(self, other: "Polygon") -> Fraction:
        """Exact sup-norm distance on the common time range (checked at the union of the meshes)."""
        lo, hi = max(self.start, other.start), min(self.end, other.end)
        nodes = sorted({t for t in self.times + other.times if lo <= t <= hi} | {lo, hi})
        return max(
            max(abs(a - b) for a, b in zip(self.value_at(t), other.value_at(t))) for t in nodes
        )

    def slopes(self) -> list[tuple]:
        return [
            tuple((v - u) / (b - a) for u, v in zip(ya, yb))
            for a, b, ya, yb in zip(self.times, self.times[1:], self.values, self.values[1:])
        ]


def _slope_precision(k: int) -> int:
    return max(k - 1, 1).bit_length() + 20


def _step_slopes(f: FieldSpec, t, y, prec: int | None) -> tuple[tuple, Fraction]:
    """Sampled slope at ``(t, y)`` and its distance bound to ``f(t, y)``.

    ``prec=None`` asks for exact rational slopes.
    """
    vals = f.slope(t, y, DEFAULT_PREC if prec is None else prec + 2)
    if prec is None and all(v.is_point for v in vals):
        return tuple(v.lo for v in vals), Fraction(0)
    if prec is None:
        prec = DEFAULT_PREC
    out, err = [], Fraction(0)
    for v in vals:
        s = Dyadic.round(v.mid, prec, "nearest").to_fraction()
        err = max(err, abs(v.mid - s) + v.width / 2)
        out.append(s)
    return tuple(out), err


def _march(f: FieldSpec, t0, y0, h, k: int, prec, start_index: int = 0):
    dom = f.domain
    times, values = [t0], [y0]
    t, y = t0, y0
    err = Fraction(0)
    for i in range(k):
        s, e = _step_slopes(f, t, y, prec)
        err = max(err, e)
        t = t0 + (i + 1) * h
        y = tuple(a + h * b for a, b in zip(y, s))
        if not dom.contains(t, y):
            raise DomainExitError("polygon left the domain", start_index + i + 1, t)
        times.append(t)
        values.append(y)
    return times, values, err


def euler_polygon(f: FieldSpec, t0, y0, t_star, k: int, prec: int | None = None) -> Polygon:
    """Left-endpoint Euler polygon with ``k`` equal steps on ``[t0, t0 + t_star]``.

    Values are exact rationals when the field is piecewise affine in ``y``
    without square roots and ``k <= 4096``; otherwise slopes are rounded to
    ``ceil(log2 k) + 20`` bits and the rounding is reported in ``slope_error``.
    """
    t0, t_star = as_rational(t0), as_rational(t_star)
    y0 = tuple(as_rational(v) for v in y0)
    if k < 1:
        raise DomainError("mesh count must be positive")
    if t_star <= 0:
        raise DomainError("time horizon must be positive")
    if not f.domain.contains(t0, y0):
        raise DomainError(f"initial point ({t0}, {y0}) lies outside the domain")
    if prec is None and not (f.piecewise_affine and k <= EXACT_MESH_LIMIT):
        prec = _slope_precision(k)
    times, values, err = _march(f, t0, y0, t_star / k, k, prec)
    return Polygon(tuple(times), tuple(values), None, err)


def _mesh_defect(f: FieldSpec, modulus: ModulusSpec | None, M: Fraction, Lt: Fraction, h: Fraction, slope_err: Fraction):
    """Bound on ``|y_k'(t) - f(t, y_k(t))|`` for mesh width ``h``."""
    E = Lt * h + slope_err
    if f.depends_on_state:
        E += modulus_upper(modulus, (M + slope_err) * h)
    return E


def solve_certified(
    f: FieldSpec,
    t_star,
    eps,
    *,
    t0=None,
    y0=None,
    k_max: int = MESH_CAP,
) -> Polygon:
    """Euler polygon on ``[t0, t0 + t_star]`` within ``eps`` of the unique solution.

    Meshes ``k = 1, 2, 4, ...`` are tried until the Osgood gap bound for the
    mesh defect drops below ``eps``.  The polygon must keep a margin larger
    than the bound to the edge of the box, which keeps the true solution
    inside as well.
    """
    t_star, eps = as_rational(t_star), as_rational(eps)
    t0, y0 = f.initial(t0, y0)
    if t_star <= 0 or eps < 0:
        raise DomainError("need t_star > 0 and eps >= 0")
    if t0 + t_star > f.domain.t_end:
        raise DomainError("horizon runs past the end of the time interval")
    m = f.modulus
    if f.depends_on_state:
        if m is None:
            raise NoUniquenessBoundError("no modulus of continuity was declared")
        verdict = osgood_diverges(m)
        if not verdict:
            raise NoUniquenessBoundError(f"{m.family} modulus fails the Osgood test: {verdict.reason}")
    M = field_bound(f)
    Lt = time_lipschitz(f)
    best = None
    k = 1
    while k <= k_max:
        prec = None if f.piecewise_affine and k <= EXACT_MESH_LIMIT else _slope_precision(k)
        predicted = Fraction(0) if prec is None else Fraction(1, 2**prec)
        h = t_star / k
        try:
            bound = _bound_for(f, m, M, Lt, h, predicted, t_star)
        except DomainError:
            bound = None
        if bound is not None:
            best = bound if best is None else min(best, bound)
        if bound is not None and bound <= eps:
            poly = euler_polygon(f, t0, y0, t_star, k, prec)
            bound = _bound_for(f, m, M, Lt, h, poly.slope_error, t_star)
            margin = min(f.domain.space_distance(v) for v in poly.values)
            if margin <= bound:
                raise DomainError(f"polygon passes within {margin} of the box edge, below the error bound {bound}")
            return Polygon(poly.times, poly.values, bound, poly.slope_error)
        k *= 2
    raise PrecisionUnreachable(f"no mesh up to {k_max} certifies error {eps}", best)


def _bound_for(f, m, M, Lt, h, slope_err, t_star) -> Fraction:
    E = _mesh_defect(f, m, M, Lt, h, slope_err)
    if not f.depends_on_state:
        return E * t_star
    return osgood_gap_bound(m, E, t_star)


def mesh_defect(f: FieldSpec, t_star, k: int, slope_err=None) -> Fraction:
    """The defect term ``E_k`` used by ``solve_certified`` for mesh ``k``."""
    t_star = as_rational(t_star)
    M = field_bound(f)
    Lt = time_lipschitz(f)
    if slope_err is None:
        slope_err = Fraction(0) if f.piecewise_affine and k <= EXACT_MESH_LIMIT else Fraction(1, 2 ** _slope_precision(k))
    if f.depends_on_state and f.modulus is None:
        raise NoUniquenessBoundError("no modulus of continuity was declared")
    return _mesh_defect(f, f.modulus, M, Lt, t_star / k, as_rational(slope_err))


class Extension(NamedTuple):
    polygon: Polygon
    beta: Fraction
    reason: str


def _crossing_time(dom: RectDomain, y, s) -> Fraction | None:
    """Time for the ray ``y + tau s`` to reach the edge of the box, ``None`` if never."""
    best = None
    for v, sv, (lo, hi) in zip(y, s, dom.box):
        if sv > 0:
            tau = (hi - v) / sv
        elif sv < 0:
            tau = (v - lo) / -sv
        else:
            continue
        best = tau if best is None else min(best, tau)
    return best


def extend_maximal(
    f: FieldSpec,
    t0=None,
    y0=None,
    *,
    max_step=EXTENSION_STEP,
    floor=EXTENSION_FLOOR,
    tolerance=EXIT_TOLERANCE,
    prec: int = EXTENSION_PREC,
    depth: int = 1,
) -> Extension:
    """Greedily extend an Euler solution until time runs out or the box edge is hit.

    Each chunk centres a ball of half the distance to the box edge, bounds
    ``f`` on it and marches for the safe horizon with steps of at most
    ``max_step``.  Exit is declared when the linearly extrapolated crossing
    time falls below ``tolerance``; ``beta`` is that crossing time.
    """
    t0, y0 = f.initial(t0, y0)
    max_step, floor, tolerance = as_rational(max_step), as_rational(floor), as_rational(tolerance)
    dom = f.domain
    times, values = [t0], [y0]
    t, y = t0, y0
    err = Fraction(0)
    while True:
        if t >= dom.t_end:
            return Extension(Polygon(tuple(times), tuple(values), None, err), dom.t_end, "boundary")
        dist = dom.space_distance(y)
        s, _ = _step_slopes(f, t, y, prec)
        cross = _crossing_time(dom, y, s)
        if dist == 0 or (cross is not None and cross <= tolerance):
            beta = min(t + (cross or 0), dom.t_end)
            return Extension(Polygon(tuple(times), tuple(values), None, err), beta, "domain-exit")
        r = dist / 2
        ball = [(v - r, v + r) for v in y]
        M = box_bound(f, t, dom.t_end, ball, depth)
        t_star = safe_time_horizon(M + Fraction(1, 2**prec), r, dom.t_end - t)
        if t_star < dom.t_end - t:
            t_star = Dyadic.round(t_star, 8 - math.floor(math.log2(t_star)), "floor").to_fraction()
        if t_star < floor:
            raise StallError(f"safe horizon {t_star} fell below the floor {floor}", t)
        k = 1
        while t_star / k > max_step:
            k *= 2
        ts, vs, e = _march(f, t, y, t_star / k, k, prec, len(times) - 1)
        err = max(err, e)
        times += ts[1:]
        values += vs[1:]
        t, y = ts[-1], vs[-1]
