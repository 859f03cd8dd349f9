"""Exact rational, dyadic and interval arithmetic; truncated power series over Q.

All public values are immutable and every rational is a canonical
``fractions.Fraction``.  Series products go through an integer kernel
(common denominator + Kronecker substitution) so that orders in the
hundreds stay cheap; the result is bit-identical to the textbook
convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

try:
    import gmpy2
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    gmpy2 = None

from .errors import DomainError, RadiusError

Rational = Fraction
Monomial = tuple  # (e_t, e_y1, ..., e_yd)


def _bare_fraction(num: int, den: int) -> Fraction:
    # skips the constructor's gcd; callers pass coprime num and den > 0
    q = object.__new__(Fraction)
    q._numerator, q._denominator = num, den
    return q


def reduced_fraction(num: int, den: int) -> Fraction:
    """``Fraction(num, den)`` with the gcd taken by GMP, much faster for huge operands."""
    if gmpy2 is None or den.bit_length() < 256:
        return Fraction(num, den)
    if den < 0:
        num, den = -num, -den
    g = int(gmpy2.gcd(num, den))
    return _bare_fraction(num // g, den // g)


def from_mpq(x) -> Fraction:
    return _bare_fraction(int(x.numerator), int(x.denominator))


def as_rational(value) -> Fraction:
    """Parse ints, Fractions, ``"p/q"`` strings and decimal strings exactly."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        return Fraction(value)
    if isinstance(value, Dyadic):
        return value.to_fraction()
    raise TypeError(f"cannot read {value!r} as a rational")


# ---------------------------------------------------------------------------
# Dyadic numbers and intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dyadic:
    """``mantissa * 2**exponent`` with an odd (or zero) mantissa."""

    mantissa: int
    exponent: int = 0

    def __post_init__(self):
        m, e = self.mantissa, self.exponent
        if m == 0:
            e = 0
        else:
            tz = (m & -m).bit_length() - 1
            if tz:
                m >>= tz
                e += tz
        object.__setattr__(self, "mantissa", m)
        object.__setattr__(self, "exponent", e)

    @classmethod
    def exact(cls, q) -> "Dyadic":
        q = as_rational(q)
        d = q.denominator
        if d & (d - 1):
            raise ValueError(f"{q} is not dyadic")
        return cls(q.numerator, -(d.bit_length() - 1))

    @classmethod
    def round(cls, q, prec: int, mode: str = "floor") -> "Dyadic":
        """Round ``q`` to a multiple of ``2**-prec``; exact dyadics on that grid are kept."""
        q = as_rational(q)
        scaled = q * (1 << prec) if prec >= 0 else q / (1 << -prec)
        if mode == "floor":
            m = math.floor(scaled)
        elif mode == "ceil":
            m = math.ceil(scaled)
        elif mode == "nearest":
            m = round(scaled)
        else:
            raise ValueError(mode)
        return cls(m, -prec)

    def to_fraction(self) -> Fraction:
        if self.exponent >= 0:
            return Fraction(self.mantissa << self.exponent)
        return Fraction(self.mantissa, 1 << -self.exponent)

    def _cmp_key(self, other) -> tuple[int, int]:
        other = other if isinstance(other, Dyadic) else Dyadic.exact(other)
        e = min(self.exponent, other.exponent)
        return self.mantissa << (self.exponent - e), other.mantissa << (other.exponent - e)

    def __lt__(self, other):
        a, b = self._cmp_key(other)
        return a < b

    def __le__(self, other):
        a, b = self._cmp_key(other)
        return a <= b

    def __gt__(self, other):
        a, b = self._cmp_key(other)
        return a > b

    def __ge__(self, other):
        a, b = self._cmp_key(other)
        return a >= b

    def __add__(self, other: "Dyadic") -> "Dyadic":
        e = min(self.exponent, other.exponent)
        return Dyadic((self.mantissa << (self.exponent - e)) + (other.mantissa << (other.exponent - e)), e)

    def __neg__(self) -> "Dyadic":
        return Dyadic(-self.mantissa, self.exponent)

    def __sub__(self, other: "Dyadic") -> "Dyadic":
        return self + (-other)

    def __mul__(self, other: "Dyadic") -> "Dyadic":
        return Dyadic(self.mantissa * other.mantissa, self.exponent + other.exponent)

    def __str__(self) -> str:
        return f"{self.mantissa}*2^{self.exponent}"

    def decimal(self, digits: int = 20) -> str:
        q = self.to_fraction()
        sign = "-" if q < 0 else ""
        q = abs(q)
        whole = q.numerator // q.denominator
        frac = q - whole
        scaled = frac * 10**digits
        tail = str(scaled.numerator // scaled.denominator).rjust(digits, "0")
        return f"{sign}{whole}.{tail}"


@dataclass(frozen=True)
class Interval:
    """Closed interval with dyadic endpoints."""

    lo: Dyadic
    hi: Dyadic

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value) -> "Interval":
        d = value if isinstance(value, Dyadic) else Dyadic.exact(value)
        return cls(d, d)

    @classmethod
    def enclose(cls, lo, hi, prec: int) -> "Interval":
        """Smallest interval on the ``2**-prec`` grid containing ``[lo, hi]``."""
        return cls(Dyadic.round(lo, prec, "floor"), Dyadic.round(hi, prec, "ceil"))

    @classmethod
    def from_mpi(cls, x) -> "Interval":
        """Convert an ``mpmath.iv`` interval (whose endpoints are binary floats)."""
        (sa, ma, ea, _), (sb, mb, eb, _) = x._mpi_

        def conv(sign, man, exp):
            if man == 0 and exp != 0:
                raise ValueError("non-finite interval endpoint")
            return Dyadic(-int(man) if sign else int(man), int(exp))

        return cls(conv(sa, ma, ea), conv(sb, mb, eb))

    @property
    def width(self) -> Fraction:
        return (self.hi - self.lo).to_fraction()

    @property
    def mid(self) -> Fraction:
        return (self.lo.to_fraction() + self.hi.to_fraction()) / 2

    def contains(self, q) -> bool:
        q = as_rational(q)
        return self.lo.to_fraction() <= q <= self.hi.to_fraction()

    def contains_interval(self, lo: Fraction, hi: Fraction) -> bool:
        return self.lo.to_fraction() <= lo and hi <= self.hi.to_fraction()

    def magnitude(self) -> Fraction:
        return max(abs(self.lo.to_fraction()), abs(self.hi.to_fraction()))

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        ps = [self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi]
        return Interval(min(ps), max(ps))

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"


# ---------------------------------------------------------------------------
# Polynomials in (t, y1, ..., yd)
# ---------------------------------------------------------------------------


def _binomial_row(n: int) -> list[int]:
    return [math.comb(n, k) for k in range(n + 1)]


@dataclass(frozen=True)
class Polynomial:
    """Vector polynomial right-hand side ``P(t, y)``.

    ``components[i]`` is a sorted tuple of ``(monomial, coefficient)`` pairs;
    a monomial is ``(e_t, e_1, ..., e_d)``.  Time is absolute.
    """

    dim: int
    components: tuple

    @classmethod
    def from_dicts(cls, dim: int, comps: Sequence[Mapping[tuple, object]]) -> "Polynomial":
        if len(comps) != dim:
            raise DomainError(f"expected {dim} components, got {len(comps)}")
        out = []
        for comp in comps:
            terms = {}
            for mono, c in comp.items():
                mono = tuple(int(e) for e in mono)
                if len(mono) != dim + 1 or min(mono) < 0:
                    raise DomainError(f"bad monomial {mono} for dimension {dim}")
                c = as_rational(c)
                if c:
                    terms[mono] = terms.get(mono, Fraction(0)) + c
            out.append(tuple(sorted((m, c) for m, c in terms.items() if c)))
        return cls(dim, tuple(out))

    def terms(self, i: int) -> dict:
        return dict(self.components[i])

    @property
    def degree(self) -> int:
        return max((sum(m) for comp in self.components for m, _ in comp), default=0)

    @property
    def is_autonomous(self) -> bool:
        return all(m[0] == 0 for comp in self.components for m, _ in comp)

    @property
    def is_zero(self) -> bool:
        return not any(self.components)

    def evaluate(self, t, y: Sequence) -> tuple[Fraction, ...]:
        t = as_rational(t)
        y = [as_rational(v) for v in y]
        out = []
        for comp in self.components:
            s = Fraction(0)
            for mono, c in comp:
                term = c * t ** mono[0]
                for v, e in zip(y, mono[1:]):
                    if e:
                        term *= v**e
                s += term
            out.append(s)
        return tuple(out)

    def partial(self, var: int) -> "Polynomial":
        """Derivative with respect to variable ``var`` (0 = t, j = y_j)."""
        comps = []
        for comp in self.components:
            d = {}
            for mono, c in comp:
                e = mono[var]
                if e:
                    m = list(mono)
                    m[var] -= 1
                    d[tuple(m)] = c * e
            comps.append(d)
        return Polynomial.from_dicts(self.dim, comps)

    def jacobian_columns(self) -> list["Polynomial"]:
        """``[dP/dy_1, ..., dP/dy_d]``, each a d-component polynomial."""
        return [self.partial(j) for j in range(1, self.dim + 1)]

    def shifted(self, tc, yc: Sequence) -> "Polynomial":
        """Coefficients of ``P(tc + s, yc + w)`` as a polynomial in ``(s, w)``."""
        center = [as_rational(tc)] + [as_rational(v) for v in yc]
        comps = []
        for comp in self.components:
            acc: dict = {}
            for mono, c in comp:
                partial = {tuple([0] * len(mono)): c}
                for var, e in enumerate(mono):
                    if not e:
                        continue
                    row = _binomial_row(e)
                    x0 = center[var]
                    nxt: dict = {}
                    for m, v in partial.items():
                        for k in range(e + 1):
                            coef = row[k] * x0 ** (e - k)
                            if not coef:
                                continue
                            mm = list(m)
                            mm[var] += k
                            key = tuple(mm)
                            nxt[key] = nxt.get(key, Fraction(0)) + v * coef
                    partial = nxt
                for m, v in partial.items():
                    acc[m] = acc.get(m, Fraction(0)) + v
            comps.append(acc)
        return Polynomial.from_dicts(self.dim, comps)

    def __str__(self) -> str:
        names = ["t"] + [f"y{j}" for j in range(1, self.dim + 1)]
        parts = []
        for comp in self.components:
            if not comp:
                parts.append("0")
                continue
            terms = []
            for mono, c in comp:
                factors = [f"{names[v]}^{e}" if e > 1 else names[v] for v, e in enumerate(mono) if e]
                if not factors:
                    terms.append(f"({c})")
                elif c == 1:
                    terms.append("*".join(factors))
                else:
                    terms.append(f"({c})*" + "*".join(factors))
            parts.append(" + ".join(terms))
        return "; ".join(parts)


# ---------------------------------------------------------------------------
# Truncated power series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedSeries:
    """``sum_{k<N} c_k (t - center)^k`` with ``c_k`` in Q^d.

    Stored component-major: ``components[i][k]`` is coordinate ``i`` of ``c_k``.
    """

    center: Fraction
    components: tuple

    def __post_init__(self):
        comps = tuple(tuple(as_rational(c) for c in comp) for comp in self.components)
        if not comps:
            raise DomainError("a series needs at least one component")
        if len({len(c) for c in comps}) != 1:
            raise DomainError("components must share the same order")
        object.__setattr__(self, "center", as_rational(self.center))
        object.__setattr__(self, "components", comps)

    @classmethod
    def scalar(cls, coeffs: Iterable, center=0) -> "TruncatedSeries":
        return cls(center, (tuple(coeffs),))

    @classmethod
    def from_vectors(cls, vectors: Sequence[Sequence], center=0) -> "TruncatedSeries":
        d = len(vectors[0])
        return cls(center, tuple(tuple(v[i] for v in vectors) for i in range(d)))

    @classmethod
    def constant(cls, values: Sequence, order: int = 1, center=0) -> "TruncatedSeries":
        return cls(center, tuple((as_rational(v),) + (Fraction(0),) * (order - 1) for v in values))

    @classmethod
    def zero(cls, dim: int, order: int, center=0) -> "TruncatedSeries":
        return cls(center, tuple((Fraction(0),) * order for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def order(self) -> int:
        return len(self.components[0])

    def coefficient(self, k: int) -> tuple[Fraction, ...]:
        return tuple(comp[k] for comp in self.components)

    @property
    def coefficients(self) -> list[tuple[Fraction, ...]]:
        return [self.coefficient(k) for k in range(self.order)]

    def truncate(self, n: int) -> "TruncatedSeries":
        if n > self.order:
            raise DomainError(f"cannot truncate order {self.order} to {n}")
        return TruncatedSeries(self.center, tuple(c[:n] for c in self.components))

    def padded(self, n: int) -> "TruncatedSeries":
        if n <= self.order:
            return self.truncate(n)
        extra = (Fraction(0),) * (n - self.order)
        return TruncatedSeries(self.center, tuple(c + extra for c in self.components))

    def derivative(self) -> "TruncatedSeries":
        """Term-wise derivative; order drops by one (never below one)."""
        if self.order <= 1:
            return TruncatedSeries.zero(self.dim, 1, self.center)
        return TruncatedSeries(
            self.center, tuple(tuple(c[k] * k for k in range(1, len(c))) for c in self.components)
        )

    def _check(self, other: "TruncatedSeries"):
        if self.center != other.center:
            raise DomainError(f"expansion points differ: {self.center} vs {other.center}")

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check(other)
        n = min(self.order, other.order)
        return TruncatedSeries(
            self.center, tuple(tuple(a[k] + b[k] for k in range(n)) for a, b in zip(self.components, other.components))
        )

    def __sub__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return self + other.scaled(-1)

    def scaled(self, c) -> "TruncatedSeries":
        c = as_rational(c)
        return TruncatedSeries(self.center, tuple(tuple(x * c for x in comp) for comp in self.components))

    def evaluate(self, t) -> tuple[Fraction, ...]:
        """Exact partial sum at ``t`` (Horner)."""
        h = as_rational(t) - self.center
        if gmpy2 is not None:
            h = gmpy2.mpq(h.numerator, h.denominator)
        out = []
        for comp in self.components:
            s = h * 0
            for c in reversed(comp):
                s = s * h + (gmpy2.mpq(c.numerator, c.denominator) if gmpy2 is not None else c)
            out.append(from_mpq(s) if gmpy2 is not None else s)
        return tuple(out)

    def valuation(self) -> int:
        """Index of the first nonzero coefficient vector, or ``order`` if none."""
        for k in range(self.order):
            if any(comp[k] for comp in self.components):
                return k
        return self.order


# ---------------------------------------------------------------------------
# integer kernel: series as (numerators, common denominator)
# ---------------------------------------------------------------------------


def _to_frame(coeffs: Sequence[Fraction]) -> tuple[list[int], int]:
    den = math.lcm(*(c.denominator for c in coeffs)) if coeffs else 1
    return [c.numerator * (den // c.denominator) for c in coeffs], den


def _from_frame(nums: Sequence[int], den: int) -> tuple[Fraction, ...]:
    return tuple(reduced_fraction(x, den) for x in nums)


def _reduce(nums: list[int], den: int) -> tuple[list[int], int]:
    if gmpy2 is not None and den.bit_length() >= 256:
        g = gmpy2.mpz(den)
        for x in nums:
            if g == 1:
                break
            g = gmpy2.gcd(g, x)
        g = int(g)
    else:
        g = math.gcd(den, *nums)
    if g > 1:
        return [x // g for x in nums], den // g
    return nums, den


def _pack(xs: Sequence[int], nbytes: int) -> int:
    pos = b"".join((x if x > 0 else 0).to_bytes(nbytes, "little") for x in xs)
    neg = b"".join((-x if x < 0 else 0).to_bytes(nbytes, "little") for x in xs)
    return int.from_bytes(pos, "little") - int.from_bytes(neg, "little")


def _unpack(c: int, nbytes: int, n: int) -> list[int]:
    bits = 8 * nbytes
    c &= (1 << (bits * n)) - 1
    raw = c.to_bytes(nbytes * n, "little")
    half, full = 1 << (bits - 1), 1 << bits
    out, carry = [], 0
    for k in range(n):
        v = int.from_bytes(raw[k * nbytes : (k + 1) * nbytes], "little") + carry
        if v >= half:
            v -= full
            carry = 1
        else:
            carry = 0
        out.append(v)
    return out


def int_mul_trunc(a: Sequence[int], b: Sequence[int], n: int) -> list[int]:
    """First ``n`` coefficients of the product of two integer polynomials."""
    a = list(a[:n])
    b = list(b[:n])
    while a and a[-1] == 0:
        a.pop()
    while b and b[-1] == 0:
        b.pop()
    if not a or not b:
        return [0] * n
    if min(len(a), len(b)) <= 4:
        out = [0] * n
        for i, x in enumerate(a):
            if x:
                for j in range(min(len(b), n - i)):
                    out[i + j] += x * b[j]
        return out
    bits = (
        max(abs(x) for x in a).bit_length()
        + max(abs(x) for x in b).bit_length()
        + min(len(a), len(b)).bit_length()
        + 2
    )
    nbytes = (bits + 7) // 8
    pa, pb = _pack(a, nbytes), _pack(b, nbytes)
    c = int(gmpy2.mpz(pa) * gmpy2.mpz(pb)) if gmpy2 is not None else pa * pb
    m = min(n, len(a) + len(b) - 1)
    return _unpack(c, nbytes, m) + [0] * (n - m)


def _frame_mul(fa, fb, n: int):
    return _reduce(int_mul_trunc(fa[0], fb[0], n), fa[1] * fb[1])


# ---------------------------------------------------------------------------
# public series operations
# ---------------------------------------------------------------------------


def series_mul(a: TruncatedSeries, b: TruncatedSeries, N: int) -> TruncatedSeries:
    """Component-wise product truncated to order ``N``.

    A one-component operand is broadcast against a d-component one.
    """
    a._check(b)
    if N > min(a.order, b.order):
        raise DomainError(f"order {N} exceeds operand orders {a.order}, {b.order}")
    ca, cb = a.components, b.components
    if len(ca) == 1 and len(cb) > 1:
        ca = ca * len(cb)
    if len(cb) == 1 and len(ca) > 1:
        cb = cb * len(ca)
    if len(ca) != len(cb):
        raise DomainError("dimension mismatch in series_mul")
    comps = []
    for x, y in zip(ca, cb):
        nums, den = _frame_mul(_to_frame(x[:N]), _to_frame(y[:N]), N)
        comps.append(_from_frame(nums, den))
    return TruncatedSeries(a.center, tuple(comps))


def series_integrate(a: TruncatedSeries) -> TruncatedSeries:
    """Antiderivative vanishing at the center; order grows by one."""
    return TruncatedSeries(
        a.center,
        tuple((Fraction(0),) + tuple(c / (k + 1) for k, c in enumerate(comp)) for comp in a.components),
    )


class _Composer:
    """Evaluates a Polynomial on series arguments inside the integer frame."""

    def __init__(self, center: Fraction, frames: list, n: int):
        tframe = _to_frame(([center, Fraction(1)] + [Fraction(0)] * n)[:n])
        self.n = n
        self.base = [tframe] + frames
        self.cache = {}

    def monomial(self, mono: tuple):
        if not any(mono):
            return [1] + [0] * (self.n - 1), 1
        hit = self.cache.get(mono)
        if hit is not None:
            return hit
        var = next(v for v, e in enumerate(mono) if e)
        parent = list(mono)
        parent[var] -= 1
        parent = tuple(parent)
        if any(parent):
            out = _frame_mul(self.monomial(parent), self.base[var], self.n)
        else:
            out = self.base[var]
        self.cache[mono] = out
        return out

    def combine_frame(self, comp) -> tuple[list[int], int]:
        if not comp:
            return [0] * self.n, 1
        parts = [(c, self.monomial(m)) for m, c in comp]
        den = math.lcm(*(c.denominator * f[1] for c, f in parts))
        acc = [0] * self.n
        for c, (nums, fden) in parts:
            scale = c.numerator * (den // (c.denominator * fden))
            for k, x in enumerate(nums):
                if x:
                    acc[k] += scale * x
        return _reduce(acc, den)

    def combine(self, comp) -> tuple[Fraction, ...]:
        return _from_frame(*self.combine_frame(comp))


def poly_compose_series(P: Polynomial, a: TruncatedSeries, N: int) -> TruncatedSeries:
    """``P(center + t, a(t))`` truncated at order ``N``."""
    if a.dim != P.dim:
        raise DomainError(f"series dimension {a.dim} does not match polynomial arity {P.dim}")
    if N > a.order:
        a = a.padded(N)
    frames = [_to_frame(comp[:N]) for comp in a.components]
    comp = _Composer(a.center, frames, N)
    return TruncatedSeries(a.center, tuple(comp.combine(c) for c in P.components))


def poly_compose_many(polys: Sequence[Polynomial], a: TruncatedSeries, N: int) -> list[TruncatedSeries]:
    """Several polynomials on the same argument, sharing monomial products."""
    if N > a.order:
        a = a.padded(N)
    frames = [_to_frame(comp[:N]) for comp in a.components]
    comp = _Composer(a.center, frames, N)
    return [TruncatedSeries(a.center, tuple(comp.combine(c) for c in P.components)) for P in polys]


def compose_frames(P: Polynomial, center: Fraction, frames: list, n: int) -> list:
    """``P(center + t, a(t))`` modulo ``t**n`` on integer frames."""
    comp = _Composer(center, frames, n)
    return [comp.combine_frame(c) for c in P.components]


def integrate_frame(frame: tuple[list[int], int]) -> tuple[list[int], int]:
    """Antiderivative of a framed series; length grows by one."""
    nums, den = frame
    n = len(nums)
    scale = math.lcm(*range(1, n + 1))
    out = [0] + [x * (scale // (k + 1)) for k, x in enumerate(nums)]
    return _reduce(out, den * scale)


@dataclass(frozen=True)
class GeometricTail:
    """Tail majorant ``scale * q**N / (1 - q)`` with ``q = |h| / radius``.

    Valid when every coefficient satisfies ``|c_k| <= scale / radius**k``.
    """

    scale: Fraction
    radius: Fraction

    def bound(self, h, order: int) -> Fraction:
        h = abs(as_rational(h))
        if h >= self.radius:
            raise RadiusError(f"|t - center| = {h} is outside the certified radius {self.radius}")
        q = h / self.radius
        return as_rational(self.scale) * q**order / (1 - q)


def eval_certified(a: TruncatedSeries, tail_bound, t, n: int) -> tuple[Interval, ...]:
    """Enclose the value at ``t`` of the function whose truncation is ``a``.

    Returns one interval per component, of width at most
    ``2**-n + 2 * tail``; it contains the true value whenever ``tail_bound``
    majorizes the discarded tail.
    """
    t = as_rational(t)
    h = t - a.center
    if tail_bound is None:
        tail = Fraction(0)
    elif isinstance(tail_bound, GeometricTail):
        tail = tail_bound.bound(h, a.order)
    else:
        tail = as_rational(tail_bound(h, a.order))
    out = []
    for s in a.evaluate(t):
        centre = Dyadic.round(s, n + 2, "nearest").to_fraction()
        slack = abs(s - centre) + tail
        rad = Dyadic.round(slack, n + 2, "ceil").to_fraction()
        out.append(Interval.enclose(centre - rad, centre + rad, n + 2))
    return tuple(out)
