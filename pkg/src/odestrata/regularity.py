"""Moduli of continuity, the Osgood divergence test, gap bounds and the stratum classifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from mpmath import iv

from .errors import DomainError, InvalidModulusError, NoUniquenessBoundError, UnsupportedError
from .series import Dyadic, Interval, as_rational
from .transcendental import exp_enclosure, log_enclosure, power_enclosure, to_iv, working_precision

FAMILIES = ("linear", "power", "rlog", "table")
STRATA = ("RCA0", "WKL0", "ACA0", "ATR0", "PI11CA0")
_GAP_BITS = 24


@dataclass(frozen=True)
class ModulusSpec:
    """``omega(r)`` valid for ``0 <= r < delta`` (``delta=None`` means unbounded).

    * ``linear``: ``params = (L,)``, ``omega = L r``
    * ``power``: ``params = (c, p)``, ``omega = c r**p`` with ``0 < p < 1``
    * ``rlog``: ``params = (c,)``, ``omega = c r ln(1/r)``, needs ``delta <= 1/e``
    * ``table``: ``params = (r_1, w_1, r_2, w_2, ...)``, piecewise linear through
      the origin; ``delta`` is the last breakpoint
    """

    family: str
    params: tuple
    delta: Fraction | None = None

    def __post_init__(self):
        params = tuple(as_rational(p) for p in self.params)
        delta = None if self.delta is None else as_rational(self.delta)
        object.__setattr__(self, "params", params)
        if self.family not in FAMILIES:
            raise InvalidModulusError(f"unknown modulus family {self.family!r}")
        if self.family == "linear":
            if len(params) != 1 or params[0] < 0:
                raise InvalidModulusError("linear modulus needs one constant L >= 0")
        elif self.family == "power":
            if len(params) != 2 or params[0] <= 0 or not 0 < params[1] < 1:
                raise InvalidModulusError("power modulus needs c > 0 and 0 < p < 1")
        elif self.family == "rlog":
            if len(params) != 1 or params[0] <= 0:
                raise InvalidModulusError("rlog modulus needs c > 0")
            if delta is None:
                delta = Fraction(1, 3)
            # r ln(1/r) increases only on (0, 1/e)
            if delta * exp_enclosure(1).hi.to_fraction() > 1:
                raise InvalidModulusError(f"rlog modulus is not increasing up to delta={delta}")
        else:
            if len(params) < 2 or len(params) % 2:
                raise InvalidModulusError("table modulus needs (r, omega) pairs")
            rs, ws = params[0::2], params[1::2]
            if any(w <= 0 for w in ws) or rs[0] <= 0:
                raise InvalidModulusError("table modulus must be positive away from zero")
            if any(b <= a for a, b in zip(rs, rs[1:])) or any(b <= a for a, b in zip(ws, ws[1:])):
                raise InvalidModulusError("table breakpoints and values must increase strictly")
            delta = rs[-1]
        if delta is not None and delta <= 0:
            raise InvalidModulusError("validity radius must be positive")
        object.__setattr__(self, "delta", delta)

    @classmethod
    def linear(cls, L, delta=None) -> "ModulusSpec":
        return cls("linear", (L,), delta)

    @classmethod
    def power(cls, c, p, delta=None) -> "ModulusSpec":
        return cls("power", (c, p), delta)

    @classmethod
    def rlog(cls, c, delta=Fraction(1, 3)) -> "ModulusSpec":
        return cls("rlog", (c,), delta)

    @classmethod
    def table(cls, points: Sequence[tuple]) -> "ModulusSpec":
        flat = []
        for r, w in points:
            flat += [r, w]
        return cls("table", tuple(flat))

    def linear_bound(self) -> Fraction:
        """Slope of a line through the origin dominating ``omega`` (linear and table only)."""
        if self.family == "linear":
            return self.params[0]
        if self.family == "table":
            return max(w / r for r, w in zip(self.params[0::2], self.params[1::2]))
        raise UnsupportedError(f"{self.family} modulus has no linear majorant near zero")

    def __str__(self) -> str:
        body = " ".join(str(p) for p in self.params)
        tail = "" if self.delta is None or self.family == "table" else f" delta={self.delta}"
        return f"{self.family} {body}{tail}"


def _table_value(m: ModulusSpec, r: Fraction) -> Fraction:
    prev_r, prev_w = Fraction(0), Fraction(0)
    for br, bw in zip(m.params[0::2], m.params[1::2]):
        if r <= br:
            return prev_w + (bw - prev_w) * (r - prev_r) / (br - prev_r)
        prev_r, prev_w = br, bw
    raise DomainError(f"r={r} is beyond the table")


def modulus_eval(m: ModulusSpec, r, prec: int = 64) -> Interval:
    """Certified enclosure of ``omega(r)``."""
    r = as_rational(r)
    if r < 0:
        raise DomainError("modulus argument must be non-negative")
    if m.delta is not None and r >= m.delta:
        raise DomainError(f"r={r} is outside the validity radius {m.delta}")
    if r == 0:
        return Interval.point(0)
    if m.family == "linear":
        v = m.params[0] * r
        if v.denominator & (v.denominator - 1) == 0:
            return Interval.point(v)
        return Interval.enclose(v, v, prec + 8)
    if m.family == "table":
        v = _table_value(m, r)
        if v.denominator & (v.denominator - 1) == 0:
            return Interval.point(v)
        return Interval.enclose(v, v, prec + 8)
    if m.family == "power":
        c, p = m.params
        base = power_enclosure(r, p, prec)
        return Interval.enclose(c * base.lo.to_fraction(), c * base.hi.to_fraction(), prec + 8)
    c = m.params[0]
    ln = log_enclosure(r, prec)
    lo, hi = -ln.hi.to_fraction(), -ln.lo.to_fraction()
    return Interval.enclose(c * r * lo, c * r * hi, prec + 8)


def modulus_upper(m: ModulusSpec, r, prec: int = 64) -> Fraction:
    return modulus_eval(m, r, prec).hi.to_fraction()


@dataclass(frozen=True)
class DivergenceVerdict:
    diverges: bool
    reason: str

    def __bool__(self) -> bool:
        return self.diverges


def osgood_diverges(m: ModulusSpec) -> DivergenceVerdict:
    """Decide whether ``int_0 dr / omega(r)`` diverges, with a one-line reason."""
    if m.family == "linear":
        return DivergenceVerdict(True, "int dr/(L r) diverges like ln(1/eps)")
    if m.family == "power":
        return DivergenceVerdict(False, f"int dr/r^{m.params[1]} converges")
    if m.family == "rlog":
        return DivergenceVerdict(True, "int dr/(r ln(1/r)) diverges like ln ln(1/eps)")
    return DivergenceVerdict(True, f"table is dominated by the line {m.linear_bound()} r near zero")


def _round_up(q: Fraction) -> Fraction:
    """Round a positive rational up onto a dyadic grid with a fixed number of significant bits."""
    e = q.numerator.bit_length() - q.denominator.bit_length()
    return Dyadic.round(q, _GAP_BITS - e, "ceil").to_fraction()


def osgood_gap_bound(m: ModulusSpec, E, t) -> Fraction:
    """Upper bound on ``S`` solving ``int_{E t}^{S} dr/omega(r) = 2 t``.

    ``S`` bounds the sup-distance between two approximate solutions whose
    defects add up to ``E``.  The result is a dyadic rounded up to 24
    significant bits.  Raises ``DomainError`` when ``E t`` or ``S`` leave
    the validity radius of the modulus.
    """
    E, t = as_rational(E), as_rational(t)
    if E < 0 or t <= 0:
        raise DomainError("need E >= 0 and t > 0")
    verdict = osgood_diverges(m)
    if not verdict:
        raise NoUniquenessBoundError(f"{m.family} modulus fails the Osgood test: {verdict.reason}")
    if E == 0:
        return Fraction(0)
    start = E * t
    if m.delta is not None and start >= m.delta:
        raise DomainError(f"initial gap {start} is outside the validity radius {m.delta}")
    if m.family in ("linear", "table"):
        L = m.linear_bound()
        S = start * exp_enclosure(2 * L * t).hi.to_fraction()
    else:
        c = m.params[0]
        with working_precision(64):
            shrink = iv.exp(-2 * to_iv(c) * to_iv(t))
            value = to_iv(start) ** shrink
        S = Interval.from_mpi(value).hi.to_fraction()
    S = _round_up(S)
    if m.delta is not None and S >= m.delta:
        raise DomainError(f"gap bound {S} is outside the validity radius {m.delta}")
    return S


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StratumReport:
    stratum: str
    evidence: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stratum not in STRATA:
            raise ValueError(f"unknown stratum {self.stratum!r}")


def _polynomial_lipschitz(P, domain) -> tuple[Fraction, Fraction]:
    """Coefficient x degree x box bounds on the Lipschitz constants in ``y`` and ``t``."""
    B = [max(abs(domain.t_start), abs(domain.t_end))] + [max(abs(lo), abs(hi)) for lo, hi in domain.box]
    Ly = Lt = Fraction(0)
    for comp in P.components:
        ly = lt = Fraction(0)
        for mono, c in comp:
            for var, e in enumerate(mono):
                if not e:
                    continue
                term = abs(c) * e
                for v, ev in enumerate(mono):
                    term *= B[v] ** (ev - 1 if v == var else ev)
                if var == 0:
                    lt += term
                else:
                    ly += term
        Ly, Lt = max(Ly, ly), max(Lt, lt)
    return Ly, Lt


def _classify_field(f) -> StratumReport:
    from .euler import field_bound, time_lipschitz

    P = f.as_polynomial()
    if P is not None:
        Ly, Lt = _polynomial_lipschitz(P, f.domain)
        return StratumReport(
            "RCA0",
            "Lipschitz in both variables: polynomial field, constants from coefficient, degree and box bounds",
            {"L_y": Ly, "L_t": Lt},
        )
    m = f.modulus
    if m is not None and m.family == "linear":
        try:
            Lt = time_lipschitz(f)
        except Exception:
            Lt = None
        if Lt is not None:
            return StratumReport(
                "RCA0",
                "Lipschitz in both variables: declared linear modulus in y, interval derivative bound in t",
                {"L_y": m.params[0], "L_t": Lt},
            )
    if m is not None:
        verdict = osgood_diverges(m)
        if verdict:
            params = {f"omega_{i}": p for i, p in enumerate(m.params)}
            if m.delta is not None:
                params["delta"] = m.delta
            return StratumReport("WKL0", f"Osgood modulus ({m}): {verdict.reason}", params)
    M = field_bound(f)
    reason = "continuity only"
    if m is not None:
        reason += f"; declared modulus {m.family} fails the Osgood test"
    return StratumReport("ACA0", reason, {"M": M})


def classify_stratum(descriptor, rank_bound: int = 4) -> StratumReport:
    """Least stratum whose hypotheses are certified for ``descriptor``.

    Accepts a ``PolyIVP``, a ``FieldSpec`` or a ``PiecewiseField``.
    """
    from .euler import FieldSpec
    from .polyivp import PolyIVP
    from .strata import PiecewiseField, derived_rank

    if isinstance(descriptor, PolyIVP):
        Ly, Lt = _polynomial_lipschitz(descriptor.P, descriptor.domain)
        return StratumReport(
            "RCA0",
            "Lipschitz in both variables: polynomial field, constants from coefficient, degree and box bounds",
            {"L_y": Ly, "L_t": Lt},
        )
    if isinstance(descriptor, FieldSpec):
        return _classify_field(descriptor)
    if isinstance(descriptor, PiecewiseField):
        cert = derived_rank(descriptor, rank_bound)
        if cert.rank is None:
            return StratumReport("PI11CA0", f"derived-set rank exceeds the bound {rank_bound}", {"bound": rank_bound})
        if cert.rank == 1:
            report = _classify_field(descriptor.piece_field(descriptor.label_at(descriptor.domain.t_start)))
            return StratumReport(report.stratum, "no discontinuities; " + report.evidence, report.parameters)
        return StratumReport("ATR0", f"finite derived-set rank {cert.rank} <= {rank_bound}", {"rank": cert.rank})
    raise UnsupportedError(f"cannot classify {type(descriptor).__name__}")
