"""Right-hand-side expression trees with exact and interval evaluation.

Variables are indexed ``0 = t`` and ``j = y_j``.  Interval evaluation uses
rational endpoints; square roots are rounded outward on a ``2**-prec``
grid, everything else is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import EvaluationError
from .series import Polynomial, as_rational

DEFAULT_PREC = 64


@dataclass(frozen=True)
class QInterval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x) -> "QInterval":
        x = as_rational(x)
        return cls(x, x)

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def magnitude(self) -> Fraction:
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x) -> bool:
        return self.lo <= as_rational(x) <= self.hi

    def hull(self, other: "QInterval") -> "QInterval":
        return QInterval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __add__(self, other: "QInterval") -> "QInterval":
        return QInterval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "QInterval") -> "QInterval":
        return QInterval(self.lo - other.hi, self.hi - other.lo)

    def __neg__(self) -> "QInterval":
        return QInterval(-self.hi, -self.lo)

    def __mul__(self, other: "QInterval") -> "QInterval":
        if self.is_point and other.is_point:
            return QInterval.point(self.lo * other.lo)
        ps = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
        return QInterval(min(ps), max(ps))

    def reciprocal(self) -> "QInterval":
        if self.lo <= 0 <= self.hi:
            raise EvaluationError(f"division by an interval containing zero: [{self.lo}, {self.hi}]")
        return QInterval(1 / self.hi, 1 / self.lo)

    def __truediv__(self, other: "QInterval") -> "QInterval":
        return self * other.reciprocal()

    def __pow__(self, n: int) -> "QInterval":
        if n == 0:
            return QInterval.point(1)
        a, b = self.lo**n, self.hi**n
        if n % 2 == 0 and self.lo < 0 < self.hi:
            return QInterval(Fraction(0), max(a, b))
        return QInterval(min(a, b), max(a, b))

    def __abs__(self) -> "QInterval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return QInterval(Fraction(0), max(-self.lo, self.hi))

    def sqrt(self, prec: int = DEFAULT_PREC) -> "QInterval":
        if self.lo < 0:
            raise EvaluationError(f"square root of an interval reaching below zero: [{self.lo}, {self.hi}]")
        return QInterval(sqrt_floor(self.lo, prec), sqrt_ceil(self.hi, prec))


def sqrt_floor(x: Fraction, prec: int) -> Fraction:
    """Largest multiple of ``2**-prec`` not above ``sqrt(x)`` (exact if a perfect square)."""
    r = _exact_sqrt(x)
    if r is not None:
        return r
    scaled = x * 4**prec
    return Fraction(math.isqrt(scaled.numerator // scaled.denominator), 2**prec)


def sqrt_ceil(x: Fraction, prec: int) -> Fraction:
    r = _exact_sqrt(x)
    if r is not None:
        return r
    return sqrt_floor(x, prec) + Fraction(1, 2**prec)


def _exact_sqrt(x: Fraction):
    n, d = x.numerator, x.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


# ---------------------------------------------------------------------------
# expression nodes
# ---------------------------------------------------------------------------


class Expr:
    """Base class; subclasses are frozen dataclasses."""

    def children(self) -> tuple:
        return ()

    def interval(self, env: Sequence[QInterval], prec: int = DEFAULT_PREC) -> QInterval:
        raise NotImplementedError

    def derivative(self, env, var: int, prec: int = DEFAULT_PREC) -> tuple[QInterval, QInterval]:
        """Enclosures of the value and of the partial derivative in ``var``.

        For ``abs``/``min``/``max`` the second entry encloses every
        difference quotient, i.e. it is a Lipschitz enclosure.
        """
        raise NotImplementedError

    def polynomial(self, dim: int):
        """Expansion as ``{monomial: coefficient}``, or ``None`` if not polynomial."""
        return None

    def depends_on(self, var: int) -> bool:
        return any(c.depends_on(var) for c in self.children())

    def depends_on_state(self) -> bool:
        return any(self.depends_on(j) for j in range(1, self.max_var() + 1))

    def max_var(self) -> int:
        return max((c.max_var() for c in self.children()), default=0)

    def y_degree(self):
        """Degree in the state variables, ``None`` when not piecewise polynomial."""
        return 0

    @property
    def has_sqrt(self) -> bool:
        return any(c.has_sqrt for c in self.children())

    def evaluate(self, t, y: Sequence) -> Fraction:
        """Exact value at a rational point; fails on irrational square roots."""
        env = [QInterval.point(t)] + [QInterval.point(v) for v in y]
        out = self.interval(env, DEFAULT_PREC)
        if not out.is_point:
            raise EvaluationError("value is not rational at this point")
        return out.lo


def _point_env(t, y):
    return [QInterval.point(t)] + [QInterval.point(v) for v in y]


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", as_rational(self.value))

    def interval(self, env, prec=DEFAULT_PREC):
        return QInterval.point(self.value)

    def derivative(self, env, var, prec=DEFAULT_PREC):
        return QInterval.point(self.value), QInterval.point(0)

    def polynomial(self, dim):
        return {(0,) * (dim + 1): self.value} if self.value else {}

    def depends_on(self, var):
        return False

    def __str__(self):
        v = self.value
        if v.denominator == 1 and v >= 0:
            return str(v.numerator)
        return f"({v})"


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def interval(self, env, prec=DEFAULT_PREC):
        return env[self.index]

    def derivative(self, env, var, prec=DEFAULT_PREC):
        return env[self.index], QInterval.point(1 if var == self.index else 0)

    def polynomial(self, dim):
        mono = [0] * (dim + 1)
        mono[self.index] = 1
        return {tuple(mono): Fraction(1)}

    def depends_on(self, var):
        return var == self.index

    def max_var(self):
        return self.index

    def y_degree(self):
        return 1 if self.index else 0

    def __str__(self):
        return "t" if self.index == 0 else f"y{self.index}"


def _poly_add(a: dict, b: dict, sign: int = 1) -> dict:
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, Fraction(0)) + sign * c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = tuple(x + y for x, y in zip(ma, mb))
            out[m] = out.get(m, Fraction(0)) + ca * cb
    return {m: c for m, c in out.items() if c}


@dataclass(frozen=True)
class Binary(Expr):
    a: Expr
    b: Expr

    symbol = "?"

    def children(self):
        return (self.a, self.b)

    def __str__(self):
        return f"({self.a} {self.symbol} {self.b})"


class Add(Binary):
    symbol = "+"

    def interval(self, env, prec=DEFAULT_PREC):
        return self.a.interval(env, prec) + self.b.interval(env, prec)

    def derivative(self, env, var, prec=DEFAULT_PREC):
        (va, da), (vb, db) = self.a.derivative(env, var, prec), self.b.derivative(env, var, prec)
        return va + vb, da + db

    def polynomial(self, dim):
        pa, pb = self.a.polynomial(dim), self.b.polynomial(dim)
        return None if pa is None or pb is None else _poly_add(pa, pb)

    def y_degree(self):
        da, db = self.a.y_degree(), self.b.y_degree()
        return None if da is None or db is None else max(da, db)


class Sub(Binary):
    symbol = "-"

    def interval(self, env, prec=DEFAULT_PREC):
        return self.a.interval(env, prec) - self.b.interval(env, prec)

    def derivative(self, env, var, prec=DEFAULT_PREC):
        (va, da), (vb, db) = self.a.derivative(env, var, prec), self.b.derivative(env, var, prec)
        return va - vb, da - db

    def polynomial(self, dim):
        pa, pb = self.a.polynomial(dim), self.b.polynomial(dim)
        return None if pa is None or pb is None else _poly_add(pa, pb, -1)

    def y_degree(self):
        da, db = self.a.y_degree(), self.b.y_degree()
        return None if da is None or db is None else max(da, db)


class Mul(Binary):
    symbol = "*"

    def interval(self, env, prec=DEFAULT_PREC):
        return self.a.interval(env, prec) * self.b.interval(env, prec)

    def derivative(self, env, var, prec=DEFAULT_PREC):
        (va, da), (vb, db) = self.a.derivative(env, var, prec), self.b.derivative(env, var, prec)
        return va * vb, da * vb + va * db

    def polynomial(self, dim):
        pa, pb = self.a.polynomial(dim), self.b.polynomial(dim)
        return None if pa is None or pb is None else _poly_mul(pa, pb)

    def y_degree(self):
        da, db = self.a.y_degree(), self.b.y_degree()
        return None if da is None or db is None else da + db


class Div(Binary):
    symbol = "/"

    def interval(self, env, prec=DEFAULT_PREC):
        return self.a.interval(env, prec) / self.b.interval(env, prec)

    def derivative(self, env, var, prec=DEFAULT_PREC):
        (va, da), (vb, db) = self.a.derivative(env, var, prec), self.b.derivative(env, var, prec)
        inv = vb.reciprocal()
        return va * inv, (da * vb - va * db) * inv * inv

    def polynomial(self, dim):
        pa = self.a.polynomial(dim)
        if pa is None or not isinstance(self.b, Const) or not self.b.value:
            return None
        return {m: c / self.b.value for m, c in pa.items()}

    def y_degree(self):
        if self.b.depends_on_state():
            return None
        return self.a.y_degree()


class Min(Binary):
    symbol = "min"

    def interval(self, env, prec=DEFAULT_PREC):
        a, b = self.a.interval(env, prec), self.b.interval(env, prec)
        return QInterval(min(a.lo, b.lo), min(a.hi, b.hi))

    def derivative(self, env, var, prec=DEFAULT_PREC):
        (va, da), (vb, db) = self.a.derivative(env, var, prec), self.b.derivative(env, var, prec)
        value = QInterval(min(va.lo, vb.lo), min(va.hi, vb.hi))
        if va.hi < vb.lo:
            return value, da
        if vb.hi < va.lo:
            return value, db
        return value, da.hull(db)

    def y_degree(self):
        da, db = self.a.y_degree(), self.b.y_degree()
        return None if da is None or db is None else max(da, db)

    def __str__(self):
        return f"min({self.a}, {self.b})"


class Max(Binary):
    symbol = "max"

    def interval(self, env, prec=DEFAULT_PREC):
        a, b = self.a.interval(env, prec), self.b.interval(env, prec)
        return QInterval(max(a.lo, b.lo), max(a.hi, b.hi))

    def derivative(self, env, var, prec=DEFAULT_PREC):
        (va, da), (vb, db) = self.a.derivative(env, var, prec), self.b.derivative(env, var, prec)
        value = QInterval(max(va.lo, vb.lo), max(va.hi, vb.hi))
        if va.lo > vb.hi:
            return value, da
        if vb.lo > va.hi:
            return value, db
        return value, da.hull(db)

    def y_degree(self):
        da, db = self.a.y_degree(), self.b.y_degree()
        return None if da is None or db is None else max(da, db)

    def __str__(self):
        return f"max({self.a}, {self.b})"


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr

    def children(self):
        return (self.a,)

    def interval(self, env, prec=DEFAULT_PREC):
        return -self.a.interval(env, prec)

    def derivative(self, env, var, prec=DEFAULT_PREC):
        v, d = self.a.derivative(env, var, prec)
        return -v, -d

    def polynomial(self, dim):
        p = self.a.polynomial(dim)
        return None if p is None else {m: -c for m, c in p.items()}

    def y_degree(self):
        return self.a.y_degree()

    def __str__(self):
        return f"(-{self.a})"


@dataclass(frozen=True)
class Pow(Expr):
    a: Expr
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("only non-negative integer powers are supported")

    def children(self):
        return (self.a,)

    def interval(self, env, prec=DEFAULT_PREC):
        return self.a.interval(env, prec) ** self.n

    def derivative(self, env, var, prec=DEFAULT_PREC):
        v, d = self.a.derivative(env, var, prec)
        if self.n == 0:
            return QInterval.point(1), QInterval.point(0)
        return v**self.n, QInterval.point(self.n) * v ** (self.n - 1) * d

    def polynomial(self, dim):
        p = self.a.polynomial(dim)
        if p is None:
            return None
        out = {(0,) * (dim + 1): Fraction(1)}
        for _ in range(self.n):
            out = _poly_mul(out, p)
        return out

    def y_degree(self):
        d = self.a.y_degree()
        return None if d is None else d * self.n

    def __str__(self):
        return f"{self.a}^{self.n}"


@dataclass(frozen=True)
class Sqrt(Expr):
    a: Expr

    def children(self):
        return (self.a,)

    @property
    def has_sqrt(self) -> bool:
        return True

    def interval(self, env, prec=DEFAULT_PREC):
        return self.a.interval(env, prec).sqrt(prec)

    def derivative(self, env, var, prec=DEFAULT_PREC):
        v, d = self.a.derivative(env, var, prec)
        root = v.sqrt(prec)
        if d.lo == 0 == d.hi:
            return root, d
        if root.lo <= 0:
            raise EvaluationError("square root is not Lipschitz where its argument reaches zero")
        return root, d / (QInterval.point(2) * root)

    def y_degree(self):
        return 0 if not self.a.depends_on_state() else None

    def __str__(self):
        return f"sqrt({self.a})"


@dataclass(frozen=True)
class Abs(Expr):
    a: Expr

    def children(self):
        return (self.a,)

    def interval(self, env, prec=DEFAULT_PREC):
        return abs(self.a.interval(env, prec))

    def derivative(self, env, var, prec=DEFAULT_PREC):
        v, d = self.a.derivative(env, var, prec)
        if v.lo > 0:
            return v, d
        if v.hi < 0:
            return -v, -d
        m = d.magnitude()
        return abs(v), QInterval(-m, m)

    def y_degree(self):
        return self.a.y_degree()

    def __str__(self):
        return f"abs({self.a})"


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(as_rational(value))


def expr_from_polynomial(P: Polynomial, i: int) -> Expr:
    """Expression tree for component ``i`` of a polynomial."""
    out = None
    for mono, c in P.components[i]:
        term: Expr = Const(c)
        for var, e in enumerate(mono):
            if e:
                factor = Var(var) if e == 1 else Pow(Var(var), e)
                term = factor if isinstance(term, Const) and term.value == 1 else Mul(term, factor)
        out = term if out is None else Add(out, term)
    return out if out is not None else Const(0)


def point_value(expr: Expr, t, y, prec: int = DEFAULT_PREC) -> QInterval:
    """Enclosure of ``expr`` at a rational point (a degenerate interval unless a root is irrational)."""
    return expr.interval(_point_env(t, y), prec)


def substitute_time(expr: Expr, value) -> Expr:
    """Replace the time variable by a rational constant."""
    if isinstance(expr, Var):
        return Const(value) if expr.index == 0 else expr
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Binary):
        return type(expr)(substitute_time(expr.a, value), substitute_time(expr.b, value))
    if isinstance(expr, Pow):
        return Pow(substitute_time(expr.a, value), expr.n)
    return type(expr)(substitute_time(expr.a, value))
