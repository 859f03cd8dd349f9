"""Fixed benchmark problems reported by the ``bench`` subcommand."""

from __future__ import annotations

import math
import time
from fractions import Fraction

from .continuation import continue_to
from .domain import RectDomain
from .euler import FieldSpec, euler_polygon, solve_certified
from .expr import Var
from .polyivp import PolyIVP, newton_iterates, residual_valuation
from .regularity import ModulusSpec
from .series import Polynomial

DEFAULT_PATCH_TARGETS = (Fraction(9, 10), Fraction(99, 100), Fraction(999, 1000), Fraction(9999, 10000))
DEFAULT_BLOWUP_TARGETS = (4, 8, 16, 32)


def square_ivp(domain: RectDomain | None = None) -> PolyIVP:
    """``y' = y**2, y(0) = 1``, solution ``1 / (1 - t)``."""
    P = Polynomial.from_dicts(1, [{(0, 2): 1}])
    return PolyIVP(P, 0, (1,), domain or RectDomain(0, 1, [(-(2**64), 2**64)]))


def exp_ivp(t_end=1) -> PolyIVP:
    """``y' = y, y(0) = 1``."""
    P = Polynomial.from_dicts(1, [{(0, 1): 1}])
    return PolyIVP(P, 0, (1,), RectDomain(0, t_end, [(-(2**64), 2**64)]))


def _ms(start: float) -> float:
    return round((time.perf_counter() - start) * 1000, 3)


def doubling(order: int = 1024) -> list[dict]:
    """Residual valuation after each Newton step on ``y' = y**2``."""
    ivp = square_ivp()
    rows = []
    start = time.perf_counter()
    for step, (y, n_k) in enumerate(newton_iterates(ivp, order)):
        # one extra zero coefficient so the valuation is measured, not capped by the order
        report = residual_valuation(ivp, y.padded(y.order + 1))
        rows.append({"step": step, "correct": n_k, "valuation": report.valuation, "ms": _ms(start)})
    return rows


def patches(targets=DEFAULT_PATCH_TARGETS, prec: int = 10) -> list[dict]:
    """Patch counts of ``continue_to`` on ``y' = y**2`` as ``T`` approaches the pole at 1."""
    ivp = square_ivp()
    rows = []
    for T in targets:
        T = Fraction(T)
        start = time.perf_counter()
        trace = continue_to(ivp, T, prec)
        rows.append({"T": T, "log_term": math.log(1 / (1 - T)), "patches": trace.count, "ms": _ms(start)})
    return rows


def fit_patch_slopes(rows: list[dict]) -> list[float]:
    """Slopes ``C`` of ``m = C ln(1/(1-T)) + C'`` between consecutive targets."""
    return [
        (b["patches"] - a["patches"]) / (b["log_term"] - a["log_term"])
        for a, b in zip(rows, rows[1:])
    ]


def expblowup(targets=DEFAULT_BLOWUP_TARGETS, prec: int = 10, repeats: int = 1) -> list[dict]:
    """Wall-clock of ``continue_to`` on ``y' = y`` at growing integer ``T`` (best of ``repeats``)."""
    ivp = exp_ivp(max(targets))
    rows = []
    for T in targets:
        best, trace = math.inf, None
        for _ in range(repeats):
            start = time.perf_counter()
            trace = continue_to(ivp, T, prec)
            best = min(best, time.perf_counter() - start)
        bits = trace.value[0].mid.numerator.bit_length() - trace.value[0].mid.denominator.bit_length()
        rows.append({"T": T, "patches": trace.count, "value_bits": bits, "ms": round(best * 1000, 3)})
    return rows


def eulerorder(k_min: int = 6, k_max: int = 12, eps=Fraction(1, 2**4)) -> list[dict]:
    """Final-value error of Euler polygons for ``y' = y`` on ``[0, 1]`` against ``e``."""
    import mpmath

    dom = RectDomain(0, 1, [(0, 3)])
    f = FieldSpec((Var(1),), dom, ModulusSpec.linear(1), t0=0, y0=(1,))
    e = mpmath.e
    rows = []
    prev = None
    for j in range(k_min, k_max + 1):
        k = 2**j
        start = time.perf_counter()
        poly = euler_polygon(f, 0, (1,), 1, k)
        err = abs(mpmath.mpf(poly.final[0].numerator) / poly.final[0].denominator - e)
        ratio = None if prev is None else float(err / prev)
        rows.append({"k": k, "error": float(err), "ratio": ratio, "ms": _ms(start)})
        prev = err
    cert = solve_certified(f, 1, eps)
    rows.append({"k": cert.k, "error": float(abs(mpmath.mpf(cert.final[0].numerator) / cert.final[0].denominator - e)), "ratio": None, "ms": None, "bound": cert.error_bound})
    return rows
