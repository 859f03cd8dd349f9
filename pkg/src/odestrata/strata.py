"""Symbolic breakpoint sets, derived-set ranks and stratified solving.

Breakpoint sets are finite unions of points and one-sided *towers*:
members ``m_n = a + c q**n`` (or ``a + c/n``) for ``n >= start`` accumulating
at the anchor ``a``.  Around every member sits a cluster, a template set
in coordinates relative to the member and scaled by the gap
``g_n = |m_n - m_{n+1}|``; templates lie in ``(-1/3, 1/3)`` so clusters
never touch.  Templates repeat periodically in ``n`` which keeps limits
along a tower decidable.

Two parallel structures are used:

* ``LayeredSet`` (``Point`` / ``Tower``) is the plain closed set, used for
  the levels of a rank certificate;
* ``Breaks`` (``BreakPoint`` / ``BreakTower``) carries piece labels on every
  breakpoint and on every gap between breakpoints and defines the field.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

from .domain import RectDomain
from .errors import DomainError, PartialSolutionError, SolverError, UnsupportedError
from .euler import FieldSpec, Polygon, extend_maximal, field_bound
from .expr import DEFAULT_PREC, Expr, QInterval, as_expr, substitute_time
from .regularity import ModulusSpec
from .series import as_rational

MAX_RANK = 4
DEFAULT_FLOOR = Fraction(1, 2**10)
THIRD = Fraction(1, 3)


def resolution_floor() -> Fraction:
    """Truncation floor for tower enumeration, overridable through ``STRATA_RESOLUTION_FLOOR``."""
    raw = os.environ.get("STRATA_RESOLUTION_FLOOR")
    if not raw:
        return DEFAULT_FLOOR
    try:
        value = Fraction(raw.strip())
    except ValueError as exc:
        raise DomainError(f"bad STRATA_RESOLUTION_FLOOR {raw!r}") from exc
    if value <= 0:
        raise DomainError("STRATA_RESOLUTION_FLOOR must be positive")
    return value


# ---------------------------------------------------------------------------
# tower geometry shared by both structures
# ---------------------------------------------------------------------------


class _Geometry:
    anchor: Fraction
    scale: Fraction
    ratio: Fraction | None
    start: int

    def _check_geometry(self):
        object.__setattr__(self, "anchor", as_rational(self.anchor))
        object.__setattr__(self, "scale", as_rational(self.scale))
        if self.ratio is not None:
            object.__setattr__(self, "ratio", as_rational(self.ratio))
            if not 0 < self.ratio < 1:
                raise DomainError("tower ratio must lie in (0, 1)")
        if self.scale == 0:
            raise DomainError("tower scale must be nonzero")
        if self.start < 1:
            raise DomainError("tower start index must be at least 1")

    @property
    def side(self) -> int:
        return 1 if self.scale > 0 else -1

    def offset(self, n: int) -> Fraction:
        """``m_n - a``."""
        if self.ratio is None:
            return self.scale / n
        return self.scale * self.ratio**n

    def member(self, n: int) -> Fraction:
        return self.anchor + self.offset(n)

    def gap(self, n: int) -> Fraction:
        return abs(self.offset(n) - self.offset(n + 1))

    def index_near(self, distance: Fraction) -> int:
        """A member index whose distance to the anchor is close to ``distance``."""
        c = abs(self.scale)
        if distance <= 0:
            return self.start
        if self.ratio is None:
            n = int(c / distance)
        else:
            n = int(math.log(float(distance / c)) / math.log(float(self.ratio))) if distance < c else 0
        return max(self.start, n)

    def first_below(self, floor: Fraction, fac: Fraction) -> int:
        """Least ``n >= start`` with ``fac * |m_n - a| < floor``."""
        n = max(self.start, self.index_near(floor / fac) - 2)
        while n > self.start and fac * abs(self.offset(n - 1)) < floor:
            n -= 1
        while fac * abs(self.offset(n)) >= floor:
            n += 1
        return n


def _check_template_extent(lo, hi):
    if lo is not None and not (-THIRD < lo and hi < THIRD):
        raise DomainError(f"cluster template [{lo}, {hi}] must lie inside (-1/3, 1/3)")


# ---------------------------------------------------------------------------
# plain closed sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Point:
    at: Fraction

    def __post_init__(self):
        object.__setattr__(self, "at", as_rational(self.at))


@dataclass(frozen=True)
class Tower(_Geometry):
    """Members selected per index class: ``head`` for ``n = start``, ``slots[(n-start) % P]`` after."""

    anchor: Fraction
    scale: Fraction
    ratio: Fraction | None
    start: int
    anchor_in: bool
    head: "LayeredSet"
    slots: tuple

    def __post_init__(self):
        self._check_geometry()
        if not self.slots:
            raise DomainError("tower needs at least one slot")
        for s in (self.head,) + tuple(self.slots):
            _check_template_extent(*s.bounds())

    def cluster(self, n: int) -> "LayeredSet":
        if n == self.start:
            return self.head
        return self.slots[(n - self.start) % len(self.slots)]

    @property
    def infinite(self) -> bool:
        return any(not s.is_empty for s in self.slots)


@dataclass(frozen=True)
class LayeredSet:
    """Closed subset of the time axis: a whole interval ``span`` or a union of components."""

    components: tuple = ()
    span: tuple | None = None

    def __post_init__(self):
        if self.span is not None:
            lo, hi = (as_rational(x) for x in self.span)
            if hi < lo:
                raise DomainError("empty span")
            object.__setattr__(self, "span", (lo, hi))
        object.__setattr__(self, "components", tuple(self.components))

    @classmethod
    def interval(cls, lo, hi) -> "LayeredSet":
        return cls((), (lo, hi))

    @classmethod
    def points(cls, xs) -> "LayeredSet":
        return cls(tuple(Point(x) for x in sorted(as_rational(x) for x in xs)))

    @property
    def is_empty(self) -> bool:
        if self.span is not None:
            return False
        for c in self.components:
            if isinstance(c, Point):
                return False
            if c.anchor_in or not c.head.is_empty or c.infinite:
                return False
        return True

    @property
    def depth(self) -> int:
        """Nesting depth; a finite set has depth 1 and a whole interval reports 0."""
        if self.span is not None:
            return 0
        d = 0
        for c in self.components:
            if isinstance(c, Point):
                d = max(d, 1)
            else:
                d = max(d, 1 + max(s.depth for s in (c.head,) + tuple(c.slots)), 1)
        return d

    def bounds(self):
        """Exact ``(min, max)`` of the set, or ``(None, None)`` when empty."""
        if self.span is not None:
            return self.span
        lo = hi = None
        for c in self.components:
            for a, b in _component_bounds(c):
                lo = a if lo is None else min(lo, a)
                hi = b if hi is None else max(hi, b)
        return lo, hi

    def contains(self, x) -> bool:
        x = as_rational(x)
        if self.span is not None:
            return self.span[0] <= x <= self.span[1]
        return any(_component_contains(c, x) for c in self.components)

    def is_closed(self) -> bool:
        """Every tower with infinitely many members keeps its anchor, recursively."""
        for c in self.components:
            if isinstance(c, Tower):
                if c.infinite and not c.anchor_in:
                    return False
                if not all(s.is_closed() for s in (c.head,) + tuple(c.slots)):
                    return False
        return True

    def issubset(self, other: "LayeredSet") -> bool:
        if other.span is not None:
            lo, hi = self.bounds()
            return lo is None or (other.span[0] <= lo and hi <= other.span[1])
        if self.span is not None:
            return False
        return all(_component_subset(c, other) for c in self.components)

    def enumerate(self, floor=None, off=Fraction(0), fac=Fraction(1)) -> list:
        """Sorted ``("point", x)`` and ``("stub", lo, hi)`` items; stubs hide tower tails below ``floor``."""
        floor = resolution_floor() if floor is None else as_rational(floor)
        if self.span is not None:
            return [("stub", off + fac * self.span[0], off + fac * self.span[1])]
        items = []
        for c in self.components:
            if isinstance(c, Point):
                items.append(("point", off + fac * c.at))
            else:
                items += _enumerate_tower(c, floor, off, fac)
        return sorted(items, key=lambda it: it[1])

    def __str__(self) -> str:
        if self.span is not None:
            return f"[{self.span[0]}, {self.span[1]}]"
        if not self.components:
            return "{}"
        return " u ".join(_component_str(c) for c in self.components)


def _component_bounds(c):
    if isinstance(c, Point):
        return [(c.at, c.at)]
    out = []
    if c.anchor_in:
        out.append((c.anchor, c.anchor))
    # far members dominate: the first period plus one is enough
    for n in range(c.start, c.start + len(c.slots) + 1):
        lo, hi = c.cluster(n).bounds()
        if lo is not None:
            m, g = c.member(n), c.gap(n)
            out.append((m + g * lo, m + g * hi))
    if c.infinite:
        lo_hi = [b for n in range(c.start, c.start + len(c.slots) + 1) for b in out]
        if not lo_hi:
            out.append((c.anchor, c.anchor))
    return out


def _member_for(tower, x: Fraction):
    """Index ``n`` whose cluster hull (relative extent 1/3) could hold ``x``."""
    d = abs(x - tower.anchor)
    if (x - tower.anchor) * tower.side <= 0:
        return None
    guess = tower.index_near(d)
    for n in range(max(tower.start, guess - 3), guess + 4):
        m, g = tower.member(n), tower.gap(n)
        if abs(x - m) < g * THIRD or (x == m):
            return n
    return None


def _component_contains(c, x: Fraction) -> bool:
    if isinstance(c, Point):
        return c.at == x
    if x == c.anchor:
        return c.anchor_in
    n = _member_for(c, x)
    if n is None:
        return False
    return c.cluster(n).contains((x - c.member(n)) / c.gap(n))


def _component_subset(c, other: LayeredSet) -> bool:
    if isinstance(c, Point):
        return other.contains(c.at)
    twin = next(
        (
            o
            for o in other.components
            if isinstance(o, Tower)
            and (o.anchor, o.scale, o.ratio, o.start) == (c.anchor, c.scale, c.ratio, c.start)
        ),
        None,
    )
    if twin is None:
        # no structurally matching tower: only finitely described parts can be checked
        if c.infinite:
            return False
        ok = not c.anchor_in or other.contains(c.anchor)
        lo, hi = c.head.bounds()
        return ok and (lo is None or all(other.contains(c.member(c.start) + c.gap(c.start) * p[1]) for p in c.head.enumerate(Fraction(0)) if p[0] == "point"))
    if c.anchor_in and not twin.anchor_in:
        return False
    period = len(c.slots) * len(twin.slots) // math.gcd(len(c.slots), len(twin.slots))
    for n in range(c.start, c.start + period + 1):
        if not c.cluster(n).issubset(twin.cluster(n)):
            return False
    return True


def _enumerate_tower(c: Tower, floor: Fraction, off: Fraction, fac: Fraction) -> list:
    items = []
    if c.anchor_in:
        items.append(("point", off + fac * c.anchor))
    if not c.infinite:
        members = range(c.start, c.start + 1)
    else:
        members = range(c.start, c.first_below(floor, fac))
    for n in members:
        s = c.cluster(n)
        if not s.is_empty:
            items += s.enumerate(floor, off + fac * c.member(n), fac * c.gap(n))
    if c.infinite:
        N = members.stop
        far = Fraction(0)
        for n in range(N, N + len(c.slots) + 1):
            lo, hi = c.cluster(n).bounds()
            if lo is not None:
                ext = c.offset(n) + c.gap(n) * (hi if c.side > 0 else lo)
                far = max(far, abs(ext))
        a = off + fac * c.anchor
        b = a + c.side * fac * far
        items.append(("stub", min(a, b), max(a, b)))
    return items


def _component_str(c) -> str:
    if isinstance(c, Point):
        return f"{{{c.at}}}"
    fam = f"{c.anchor}+{c.scale}*{c.ratio}^n" if c.ratio is not None else f"{c.anchor}+{c.scale}/n"
    parts = [f"tower({fam}, n>={c.start}"]
    if not c.anchor_in:
        parts.append("anchor excluded")
    parts.append("head " + str(c.head))
    parts.append("slots " + " | ".join(str(s) for s in c.slots))
    return ", ".join(parts) + ")"


# ---------------------------------------------------------------------------
# labelled breakpoint layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BreakPoint:
    at: Fraction
    label: int

    def __post_init__(self):
        object.__setattr__(self, "at", as_rational(self.at))


@dataclass(frozen=True)
class Cluster:
    """Template around a tower member: components in relative coordinates and ``len - 1`` inner gap labels."""

    components: tuple
    gaps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "gaps", tuple(self.gaps))
        if len(self.gaps) != max(len(self.components) - 1, 0):
            raise DomainError("a cluster needs one gap label between each pair of components")
        if not self.components:
            raise DomainError("a cluster must contain its member")
        if not any(_layout_contains_zero(c) for c in self.components):
            raise DomainError("a cluster must contain its member at relative position 0")
        _check_order(self.components)
        lo, hi = _layout_bounds(self.components)
        _check_template_extent(lo, hi)


@dataclass(frozen=True)
class TowerSlot:
    """Member ``n`` of a tower: a plain point with ``label`` or a ``cluster``; ``gap`` labels the
    open stretch between this member's cluster and the next one toward the anchor."""

    gap: int
    label: int | None = None
    cluster: Cluster | None = None

    def __post_init__(self):
        if (self.label is None) == (self.cluster is None):
            raise DomainError("a tower slot has either a member label or a cluster")

    @property
    def template(self) -> Cluster:
        return self.cluster if self.cluster is not None else Cluster((BreakPoint(0, self.label),))


@dataclass(frozen=True)
class BreakTower(_Geometry):
    anchor: Fraction
    scale: Fraction
    ratio: Fraction | None
    start: int
    anchor_label: int
    slots: tuple

    def __post_init__(self):
        self._check_geometry()
        object.__setattr__(self, "slots", tuple(self.slots))
        if not self.slots:
            raise DomainError("tower needs at least one slot")

    def slot(self, n: int) -> TowerSlot:
        return self.slots[(n - self.start) % len(self.slots)]


def _layout_contains_zero(c) -> bool:
    return (isinstance(c, BreakPoint) and c.at == 0) or (isinstance(c, BreakTower) and c.anchor == 0)


def _break_bounds(c):
    if isinstance(c, BreakPoint):
        return c.at, c.at
    m, g = c.member(c.start), c.gap(c.start)
    lo, hi = _layout_bounds(c.slot(c.start).template.components)
    far = m + g * (hi if c.side > 0 else lo)
    return min(c.anchor, far), max(c.anchor, far)


def _layout_bounds(comps):
    if not comps:
        return None, None
    bs = [_break_bounds(c) for c in comps]
    return min(b[0] for b in bs), max(b[1] for b in bs)


def _check_order(comps):
    bs = [_break_bounds(c) for c in comps]
    for (a_lo, a_hi), (b_lo, b_hi) in zip(bs, bs[1:]):
        if not a_hi < b_lo:
            raise DomainError("breakpoint components must be listed left to right without overlap")


@dataclass(frozen=True)
class Breaks:
    """Top-level layout on ``[lo, hi]``: components and ``len + 1`` gap labels."""

    components: tuple
    gaps: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "gaps", tuple(self.gaps))
        if len(self.gaps) != len(self.components) + 1:
            raise DomainError("top-level layout needs one more gap label than components")
        _check_order(self.components)

    def labels(self) -> set:
        out = set(g for g in self.gaps if g is not None)
        for c in self.components:
            out |= _labels_of(c)
        return out


def _layout_depth(comps) -> int:
    d = 0
    for c in comps:
        if isinstance(c, BreakPoint):
            d = max(d, 1)
        else:
            d = max(d, 1 + max(_layout_depth(s.template.components) for s in c.slots))
    return d


def _labels_of(c) -> set:
    if isinstance(c, BreakPoint):
        return {c.label}
    out = {c.anchor_label}
    for s in c.slots:
        out.add(s.gap)
        out |= _cluster_labels(s.template)
    return out


def _cluster_labels(cl: Cluster) -> set:
    out = set(cl.gaps)
    for c in cl.components:
        out |= _labels_of(c)
    return out


# ---------------------------------------------------------------------------
# piecewise fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseField:
    """Field equal to ``pieces[label]`` where ``label`` is read off the layout at time ``t``."""

    breaks: Breaks
    pieces: tuple
    domain: RectDomain
    t0: Fraction | None = None
    y0: tuple | None = None
    modulus: ModulusSpec | None = None

    def __post_init__(self):
        pieces = tuple(tuple(as_expr(e) for e in p) for p in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if any(len(p) != self.domain.dim for p in pieces):
            raise DomainError("every piece needs one expression per component")
        if self.t0 is not None:
            object.__setattr__(self, "t0", as_rational(self.t0))
        if self.y0 is not None:
            object.__setattr__(self, "y0", tuple(as_rational(v) for v in self.y0))
        for lab in self.breaks.labels():
            if not 0 <= lab < len(pieces):
                raise DomainError(f"label {lab} does not name a piece")
        if _layout_depth(self.breaks.components) > MAX_RANK:
            raise UnsupportedError(f"breakpoint layouts deeper than {MAX_RANK} are not supported")
        lo, hi = _layout_bounds(self.breaks.components)
        if lo is not None and not (self.domain.t_start <= lo and hi <= self.domain.t_end):
            raise DomainError("breakpoints must lie inside the time interval")
        gaps = self.breaks.gaps
        if (gaps[0] is None and lo != self.domain.t_start) or (gaps[-1] is None and hi != self.domain.t_end):
            raise DomainError("only a gap outside the time interval may be left unlabelled")
        for c in self.breaks.components:
            if isinstance(c, BreakTower):
                for lab in _labels_of(c):
                    if any(e.depends_on(0) for e in pieces[lab]):
                        raise UnsupportedError("pieces used near a tower must not depend on t")

    @property
    def dim(self) -> int:
        return self.domain.dim

    def piece_field(self, label: int, domain: RectDomain | None = None) -> FieldSpec:
        return FieldSpec(self.pieces[label], domain or self.domain, self.modulus)

    def label_at(self, t) -> int:
        t = as_rational(t)
        d = self.domain
        if not d.t_start <= t <= d.t_end:
            raise DomainError(f"t={t} is outside the time interval")
        return _locate(self.breaks.components, self.breaks.gaps[1:-1], self.breaks.gaps[0], self.breaks.gaps[-1], t)

    def evaluate(self, t, y, prec: int = DEFAULT_PREC) -> tuple:
        env = [QInterval.point(t)] + [QInterval.point(v) for v in y]
        return tuple(e.interval(env, prec) for e in self.pieces[self.label_at(t)])

    def same_function(self, i, j, at=None) -> bool:
        """Do pieces ``i`` and ``j`` agree as functions of ``y`` (at time ``at`` if given)?"""
        if i is None or j is None or i == j:
            return True
        return all(_same_expr(a, b, at, self.domain) for a, b in zip(self.pieces[i], self.pieces[j]))


def _same_expr(a: Expr, b: Expr, at, domain: RectDomain) -> bool:
    if at is not None:
        a, b = substitute_time(a, at), substitute_time(b, at)
    if a == b:
        return True
    dim = domain.dim
    pa, pb = a.polynomial(dim), b.polynomial(dim)
    if pa is not None and pb is not None:
        return pa == pb
    t = at if at is not None else (domain.t_start + domain.t_end) / 2
    samples = [tuple(lo + (hi - lo) * Fraction(k, 7) for lo, hi in domain.box) for k in range(8)]
    for y in samples:
        env = [QInterval.point(t)] + [QInterval.point(v) for v in y]
        va, vb = a.interval(env), b.interval(env)
        if va.hi < vb.lo or vb.hi < va.lo:
            return False
    raise UnsupportedError(f"cannot decide whether {a} and {b} agree")


def _locate(comps, inner_gaps, left, right, x: Fraction):
    """Label at ``x`` inside a layout whose outside neighbours carry ``left`` / ``right``."""
    for i, c in enumerate(comps):
        lo, hi = _break_bounds(c)
        if x < lo:
            return left if i == 0 else inner_gaps[i - 1]
        if x <= hi:
            L = left if i == 0 else inner_gaps[i - 1]
            R = right if i == len(comps) - 1 else inner_gaps[i]
            if isinstance(c, BreakPoint):
                return c.label
            return _locate_tower(c, L, R, x)
    return right


def _locate_tower(c: BreakTower, L, R, x: Fraction):
    if x == c.anchor:
        return c.anchor_label
    d = abs(x - c.anchor)
    guess = c.index_near(d)
    far_ctx = R if c.side > 0 else L
    for n in range(max(c.start, guess - 3), guess + 4):
        m, g = c.member(n), c.gap(n)
        cl = c.slot(n).template
        lo, hi = _layout_bounds(cl.components)
        a, b = m + g * lo, m + g * hi
        toward = c.slot(n).gap
        away = far_ctx if n == c.start else c.slot(n - 1).gap
        if a <= x <= b:
            cl_left, cl_right = (toward, away) if c.side > 0 else (away, toward)
            return _locate(cl.components, cl.gaps, cl_left, cl_right, (x - m) / g)
        # stretch toward the anchor, up to the next cluster
        m2, g2 = c.member(n + 1), c.gap(n + 1)
        lo2, hi2 = _layout_bounds(c.slot(n + 1).template.components)
        a2, b2 = m2 + g2 * lo2, m2 + g2 * hi2
        if c.side > 0 and b2 < x < a:
            return toward
        if c.side < 0 and b < x < a2:
            return toward
    raise SolverError(f"could not place t={x} inside the tower at {c.anchor}")  # pragma: no cover


# ---------------------------------------------------------------------------
# presence structures: which layout nodes belong to a level
# ---------------------------------------------------------------------------
#
# A presence mirrors a layout: a bool for a BreakPoint, and for a BreakTower a
# tuple (anchor, head, slots) where head/slots are presences of the clusters
# of member ``start`` and of members in each index class after it.


def _full_presence(comps):
    out = []
    for c in comps:
        if isinstance(c, BreakPoint):
            out.append(True)
        else:
            head = _full_presence(c.slot(c.start).template.components)
            slots = tuple(_full_presence(s.template.components) for s in c.slots)
            out.append((True, head, slots))
    return tuple(out)


def _presence_empty(pres) -> bool:
    for p in pres:
        if p is True:
            return False
        if isinstance(p, tuple) and (p[0] or not _presence_empty(p[1]) or any(not _presence_empty(s) for s in p[2])):
            return False
    return True


def _present_labels(comps, pres) -> set:
    out = set()
    for c, p in zip(comps, pres):
        if isinstance(c, BreakPoint):
            if p:
                out.add(c.label)
        else:
            anchor, head, slots = p
            if anchor:
                out.add(c.anchor_label)
            out |= _present_labels(c.slot(c.start).template.components, head)
            for s, sp in zip(c.slots, slots):
                out |= _present_labels(s.template.components, sp)
    return out


class _Ranker:
    def __init__(self, f: PiecewiseField):
        self.f = f

    def classes(self, labels) -> list:
        reps = []
        for lab in labels:
            if not any(self.f.same_function(lab, r) for r in reps):
                reps.append(lab)
        return reps

    def limit_agrees(self, value, near) -> bool:
        """Do the values ``near`` converge to ``value`` along a tower (periodic pattern)?"""
        classes = self.classes(sorted(near))
        if len(classes) > 2:
            raise UnsupportedError("values along a tower take more than two distinct values")
        return all(self.f.same_function(value, lab) for lab in near)

    # level 0 -> 1: discontinuities of f on the whole interval
    def full(self, comps, inner_gaps, left, right, at_known: bool):
        out = []
        for i, c in enumerate(comps):
            L = left if i == 0 else inner_gaps[i - 1]
            R = right if i == len(comps) - 1 else inner_gaps[i]
            if isinstance(c, BreakPoint):
                at = c.at if at_known else None
                cont = self.f.same_function(L, c.label, at) and self.f.same_function(c.label, R, at)
                out.append(not cont)
                continue
            near = set()
            for s in c.slots:
                near.add(s.gap)
                near |= _cluster_labels(s.template)
            outside = L if c.side > 0 else R
            at = c.anchor if at_known else None
            anchor = not (self.limit_agrees(c.anchor_label, near) and self.f.same_function(outside, c.anchor_label, at))
            far = R if c.side > 0 else L

            def member(n, away):
                toward = c.slot(n).gap
                cl = c.slot(n).template
                cl_l, cl_r = (toward, away) if c.side > 0 else (away, toward)
                return self.full(cl.components, cl.gaps, cl_l, cl_r, False)

            head = member(c.start, far)
            P = len(c.slots)
            slots = tuple(member(c.start + (k if k else P), c.slots[(k - 1) % P].gap) for k in range(P))
            out.append((anchor, head, slots))
        return tuple(out)

    # level k -> k+1 for k >= 1: discontinuities of f restricted to a countable closed set
    def restricted(self, comps, pres):
        out = []
        for c, p in zip(comps, pres):
            if isinstance(c, BreakPoint):
                out.append(False)  # isolated
                continue
            anchor, head, slots = p
            near = set()
            for s, sp in zip(c.slots, slots):
                near |= _present_labels(s.template.components, sp)
            new_anchor = bool(anchor and near and not self.limit_agrees(c.anchor_label, near))
            new_head = self.restricted(c.slot(c.start).template.components, head)
            new_slots = tuple(self.restricted(s.template.components, sp) for s, sp in zip(c.slots, slots))
            out.append((new_anchor, new_head, new_slots))
        return tuple(out)


def _presence_to_set(comps, pres) -> LayeredSet:
    out = []
    for c, p in zip(comps, pres):
        if isinstance(c, BreakPoint):
            if p:
                out.append(Point(c.at))
            continue
        anchor, head, slots = p
        head_set = _presence_to_set(c.slot(c.start).template.components, head)
        slot_sets = tuple(_presence_to_set(s.template.components, sp) for s, sp in zip(c.slots, slots))
        if not anchor and head_set.is_empty and all(s.is_empty for s in slot_sets):
            continue
        if head_set.is_empty and all(s.is_empty for s in slot_sets):
            out.append(Point(c.anchor))
            continue
        out.append(Tower(c.anchor, c.scale, c.ratio, c.start, bool(anchor), head_set, slot_sets))
    return LayeredSet(tuple(out))


def _presence_from_set(comps, K: LayeredSet, off=Fraction(0), fac=Fraction(1)):
    """Align an arbitrary set with a layout by testing each node (one generic member per class)."""
    out = []
    for c in comps:
        if isinstance(c, BreakPoint):
            out.append(K.contains(off + fac * c.at))
            continue
        anchor = K.contains(off + fac * c.anchor)

        def member(n):
            return _presence_from_set(
                c.slot(n).template.components, K, off + fac * c.member(n), fac * c.gap(n)
            )

        P = len(c.slots)
        out.append((anchor, member(c.start), tuple(member(c.start + (k if k else P)) for k in range(P))))
    return tuple(out)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankCertificate:
    """``rank`` is ``None`` when the chain had not emptied by ``max_rank``."""

    rank: int | None
    chain: tuple

    @property
    def exceeds_bound(self) -> bool:
        return self.rank is None

    def is_nested(self) -> bool:
        return all(b.issubset(a) for a, b in zip(self.chain, self.chain[1:]))

    def is_closed(self) -> bool:
        return all(level.is_closed() for level in self.chain)


def _whole(f: PiecewiseField) -> LayeredSet:
    return LayeredSet.interval(f.domain.t_start, f.domain.t_end)


def _top(f: PiecewiseField):
    b = f.breaks
    return b.components, b.gaps[1:-1], b.gaps[0], b.gaps[-1]


def _first_level(f: PiecewiseField):
    comps, inner, left, right = _top(f)
    d = f.domain
    # outside the time interval there is nothing to compare against
    if comps and _break_bounds(comps[0])[0] == d.t_start:
        left = None
    if comps and _break_bounds(comps[-1])[1] == d.t_end:
        right = None
    return _Ranker(f).full(comps, inner, left, right, True)


def discontinuity_set(f: PiecewiseField, K: LayeredSet) -> LayeredSet:
    """Points of ``K`` at which ``f`` restricted to ``K`` is discontinuous."""
    comps = f.breaks.components
    if K.span is not None:
        if K.span != (f.domain.t_start, f.domain.t_end):
            raise UnsupportedError("only the whole time interval is supported as an uncountable level")
        return _presence_to_set(comps, _first_level(f))
    pres = _presence_from_set(comps, K)
    return _presence_to_set(comps, _Ranker(f).restricted(comps, pres))


def derived_rank(f: PiecewiseField, max_rank: int = MAX_RANK) -> RankCertificate:
    """Iterate the discontinuity-set operator from the whole interval until it empties."""
    if not 1 <= max_rank <= MAX_RANK:
        raise DomainError(f"max_rank must lie in 1..{MAX_RANK}")
    comps = f.breaks.components
    ranker = _Ranker(f)
    chain = [_whole(f)]
    pres = _first_level(f)
    level = 1
    while True:
        current = _presence_to_set(comps, pres)
        chain.append(current)
        if current.is_empty:
            return RankCertificate(level, tuple(chain))
        if level >= max_rank:
            return RankCertificate(None, tuple(chain))
        pres = ranker.restricted(comps, pres)
        level += 1


class Span(NamedTuple):
    lo: Fraction
    hi: Fraction
    stub: bool = False


def _spans_between(items, lo: Fraction, hi: Fraction) -> list:
    out = []
    cur = lo
    for it in items:
        if it[0] == "point":
            x = it[1]
            if x > cur:
                out.append(Span(cur, min(x, hi)))
            cur = max(cur, x)
        else:
            a, b = it[1], it[2]
            if a > cur:
                out.append(Span(cur, a))
            if b > a:
                out.append(Span(max(a, cur), b, True))
            cur = max(cur, b)
    if cur < hi:
        out.append(Span(cur, hi))
    return [s for s in out if s.hi > s.lo]


def continuity_intervals(level: LayeredSet, next_level: LayeredSet, floor=None) -> list:
    """Maximal open intervals of the complement of ``next_level`` meeting ``level``, left to right.

    Tower tails closer than ``floor`` to their anchor are merged into one
    span flagged ``stub``.
    """
    floor = resolution_floor() if floor is None else as_rational(floor)
    lo, hi = level.bounds()
    if lo is None:
        return []
    spans = _spans_between(next_level.enumerate(floor), lo, hi)
    if level.span is not None:
        return spans
    items = level.enumerate(floor)
    keep = []
    for s in spans:
        for it in items:
            a, b = (it[1], it[1]) if it[0] == "point" else (it[1], it[2])
            if (s.lo < b and a < s.hi) or (s.stub and s.lo <= a <= s.hi):
                keep.append(s)
                break
    return keep


class StratifiedSolution(NamedTuple):
    polygon: Polygon
    certificate: RankCertificate
    spans: tuple
    stub_error: Fraction


def _all_breaks(f: PiecewiseField) -> LayeredSet:
    comps = f.breaks.components
    return _presence_to_set(comps, _full_presence(comps))


def solve_stratified(f: PiecewiseField, max_rank: int = MAX_RANK, *, t0=None, y0=None, floor=None, **extend) -> StratifiedSolution:
    """Solve between consecutive discontinuities and glue the pieces continuously.

    Every span is solved by ``extend_maximal`` starting from the value the
    previous span ended with; stub spans hiding infinitely many breakpoints
    are bridged by a constant segment, which is off by at most ``M`` times
    the stub length.
    """
    floor = resolution_floor() if floor is None else as_rational(floor)
    cert = derived_rank(f, max_rank)
    if cert.rank is None:
        raise UnsupportedError(f"derived-set rank exceeds {max_rank}")
    d = f.domain
    t0 = as_rational(t0) if t0 is not None else (f.t0 if f.t0 is not None else d.t_start)
    y0 = tuple(as_rational(v) for v in (y0 if y0 is not None else f.y0 or ()))
    if len(y0) != f.dim:
        raise DomainError("no initial value given")
    if t0 != d.t_start:
        raise DomainError("stratified solving starts at the left end of the time interval")
    if cert.rank == 1:
        ext = extend_maximal(f.piece_field(f.label_at(d.t_start)), t0, y0, **extend)
        if ext.reason != "boundary":
            raise PartialSolutionError("solution left the domain", ext.beta, ext.polygon)
        return StratifiedSolution(ext.polygon, cert, (Span(d.t_start, d.t_end),), Fraction(0))
    spans = continuity_intervals(cert.chain[0], cert.chain[1], floor)
    cuts = _all_breaks(f).enumerate(floor)
    M = max(field_bound(f.piece_field(lab)) for lab in f.breaks.labels())
    times, values = [t0], [y0]
    slope_error = Fraction(0)
    stub_error = Fraction(0)
    y = y0
    for span in spans:
        if span.stub:
            times.append(span.hi)
            values.append(y)
            stub_error += M * (span.hi - span.lo)
            continue
        inner = [c for c in cuts if c[1] < span.hi and (c[1] > span.lo if c[0] == "point" else c[2] > span.lo)]
        for a, b, stub in _spans_between(inner, span.lo, span.hi):
            if stub:
                times.append(b)
                values.append(y)
                stub_error += M * (b - a)
                continue
            lab = f.label_at((a + b) / 2)
            piece = f.piece_field(lab, d.with_time(a, b))
            try:
                ext = extend_maximal(piece, a, y, **extend)
            except SolverError as exc:
                glued = Polygon(tuple(times), tuple(values), None, slope_error)
                raise PartialSolutionError(f"piece on [{a}, {b}] failed: {exc}", a, glued) from exc
            if ext.reason != "boundary":
                glued = Polygon(tuple(times) + ext.polygon.times[1:], tuple(values) + ext.polygon.values[1:], None, slope_error)
                raise PartialSolutionError("solution left the domain", ext.beta, glued)
            times += ext.polygon.times[1:]
            values += ext.polygon.values[1:]
            slope_error = max(slope_error, ext.polygon.slope_error)
            y = values[-1]
    return StratifiedSolution(Polygon(tuple(times), tuple(values), None, slope_error), cert, tuple(spans), stub_error)
