"""Formal power-series solutions of polynomial IVPs.

Two routes to the Taylor coefficients of ``y' = P(t, y), y(t0) = y0``:

* Picard iteration ``u <- y0 + int P(u)`` gains one coefficient per step;
* Newton lifting solves the linearised equation for a correction and
  doubles the number of correct coefficients per step.

Both are exact over Q and must agree coefficient for coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import gmpy2

from .domain import RectDomain
from .errors import DomainError
from .series import (
    from_mpq,
    Polynomial,
    TruncatedSeries,
    _from_frame,
    _reduce,
    _to_frame,
    as_rational,
    compose_frames,
    integrate_frame,
    poly_compose_many,
    poly_compose_series,
    series_integrate,
)


@dataclass(frozen=True)
class PolyIVP:
    P: Polynomial
    t0: Fraction
    y0: tuple
    domain: RectDomain

    def __post_init__(self):
        object.__setattr__(self, "t0", as_rational(self.t0))
        object.__setattr__(self, "y0", tuple(as_rational(v) for v in self.y0))
        if self.P.dim < 1 or len(self.y0) != self.P.dim or self.domain.dim != self.P.dim:
            raise DomainError("dimensions of P, y0 and the domain disagree")
        if not self.domain.contains(self.t0, self.y0):
            raise DomainError(f"initial point ({self.t0}, {self.y0}) lies outside the domain")

    @property
    def dim(self) -> int:
        return self.P.dim


@dataclass(frozen=True)
class ResidualReport:
    valuation: int
    checked: int


def _initial_series(ivp: PolyIVP, order: int = 1) -> TruncatedSeries:
    return TruncatedSeries.constant(ivp.y0, order, ivp.t0)


def _check_start(ivp: PolyIVP, u: TruncatedSeries):
    if u.center != ivp.t0:
        raise DomainError(f"series expands at {u.center}, IVP starts at {ivp.t0}")
    if u.dim != ivp.dim:
        raise DomainError("series dimension does not match the IVP")


def picard_step(ivp: PolyIVP, u: TruncatedSeries, N: int) -> TruncatedSeries:
    """``y0 + int_{t0}^t P(s, u(s)) ds`` truncated at order ``N``."""
    _check_start(ivp, u)
    if N < 1:
        raise DomainError("order must be positive")
    if N == 1:
        return _initial_series(ivp)
    f = poly_compose_series(ivp.P, u.padded(max(N - 1, 1)), N - 1)
    integral = series_integrate(f)
    return integral + _initial_series(ivp).padded(N)


def _picard_frames(ivp: PolyIVP, N: int) -> Iterator[list]:
    """Picard iterates on integer frames, avoiding per-coefficient reduction."""
    y0 = [_to_frame([v]) for v in ivp.y0]
    u = y0
    for j in range(1, N + 1):
        n = min(j + 1, N)
        if n == 1:
            u = y0
        else:
            padded = [(nums[: n - 1] + [0] * (n - 1 - len(nums)), den) for nums, den in u]
            f = compose_frames(ivp.P, ivp.t0, padded, n - 1)
            u = [_with_constant(integrate_frame(g), c0) for g, c0 in zip(f, y0)]
        yield u


def _with_constant(frame, const) -> tuple[list[int], int]:
    """Replace the (zero) constant term of ``frame`` by the framed scalar ``const``."""
    nums, den = frame
    (c,), d = const
    new_den = math.lcm(den, d)
    out = [x * (new_den // den) for x in nums]
    out[0] = c * (new_den // d)
    return _reduce(out, new_den)


def _frames_to_series(ivp: PolyIVP, frames: list) -> TruncatedSeries:
    return TruncatedSeries(ivp.t0, tuple(_from_frame(nums, den) for nums, den in frames))


def picard_iterates(ivp: PolyIVP, N: int) -> Iterator[TruncatedSeries]:
    """Yield ``u_1, ..., u_N`` where ``u_j`` is computed at order ``min(j+1, N)``.

    Coefficients beyond ``j`` of ``u_j`` are not yet settled, so carrying them
    would only cost time; the final iterate is the order-``N`` truncation.
    """
    if N < 1:
        raise DomainError("order must be positive")
    for frames in _picard_frames(ivp, N):
        yield _frames_to_series(ivp, frames)


def picard_solve(ivp: PolyIVP, N: int) -> TruncatedSeries:
    """First ``N`` Taylor coefficients at ``t0`` after exactly ``N`` Picard steps."""
    if N < 1:
        raise DomainError("order must be positive")
    frames = None
    for frames in _picard_frames(ivp, N):
        pass
    return _frames_to_series(ivp, frames)


def _residual(ivp: PolyIVP, y: TruncatedSeries, n: int) -> TruncatedSeries:
    """``y' - P(y)`` modulo ``t**n``."""
    dy = y.derivative().padded(n)
    return dy - poly_compose_series(ivp.P, y, n)


def residual_valuation(ivp: PolyIVP, y: TruncatedSeries) -> ResidualReport:
    _check_start(ivp, y)
    checked = y.order - 1
    if checked == 0:
        return ResidualReport(0, 0)
    r = _residual(ivp, y, checked)
    return ResidualReport(min(r.valuation(), checked), checked)


def linear_series_solve(A: Sequence[Sequence[TruncatedSeries]], b: TruncatedSeries, N: int) -> TruncatedSeries:
    """Solve ``delta' - A delta = b`` with ``delta(center) = 0`` modulo ``t**(N-1)``.

    ``A`` is a d x d matrix of scalar series and ``b`` a d-component series.
    Uses the coefficient recurrence
    ``delta_{k+1} = ((A delta)_k + b_k) / (k + 1)``.
    Coefficients of ``A`` beyond its order are only allowed to be missing
    where they multiply zero coefficients of ``delta``.
    """
    d = b.dim
    if len(A) != d or any(len(row) != d for row in A):
        raise DomainError("matrix and right-hand side dimensions disagree")
    if N < 1:
        raise DomainError("order must be positive")
    for row in A:
        for a in row:
            if a.center != b.center:
                raise DomainError("matrix and right-hand side expand at different points")
    bq = [[gmpy2.mpq(c.numerator, c.denominator) for c in comp] for comp in b.padded(max(N - 1, 1)).components]
    Aq = [[[gmpy2.mpq(c.numerator, c.denominator) for c in a.components[0]] for a in row] for row in A]
    delta = [[gmpy2.mpq(0)] * N for _ in range(d)]
    # delta vanishes up to the valuation of b
    start = b.valuation() + 1
    zero = gmpy2.mpq(0)
    for k in range(min(start, N) - 1, N - 1):
        for i in range(d):
            acc = bq[i][k]
            for j in range(d):
                aij = Aq[i][j]
                dj = delta[j]
                lo = start
                if lo > k:
                    continue
                hi_m = k - lo
                if hi_m >= len(aij):
                    if any(dj[m] for m in range(lo, k - len(aij) + 1)):
                        raise DomainError("matrix series too short for the requested order")
                    hi_m = len(aij) - 1
                for m in range(hi_m + 1):
                    x = dj[k - m]
                    if x:
                        acc += aij[m] * x
            delta[i][k + 1] = acc / (k + 1) if acc != zero else zero
    comps = tuple(tuple(from_mpq(x) for x in comp) for comp in delta)
    return TruncatedSeries(b.center, comps)


def newton_step(ivp: PolyIVP, y_k: TruncatedSeries, N_k: int) -> TruncatedSeries:
    """Lift a solution correct to order ``N_k`` to one correct to order ``2 N_k``.

    ``N_k`` counts correct coefficients, i.e. the residual valuation of
    ``y_k`` is at least ``N_k - 1``.
    """
    _check_start(ivp, y_k)
    if N_k < 1:
        raise DomainError("order must be positive")
    M = 2 * N_k
    y = y_k.truncate(min(N_k, y_k.order)).padded(M)
    rho = _residual(ivp, y, M - 1)
    # correction is O(t^N_k), so the Jacobian is only needed modulo t^(N_k - 1)
    jac_order = max(N_k - 1, 1)
    cols = poly_compose_many(ivp.P.jacobian_columns(), y, jac_order)
    d = ivp.dim
    A = [[TruncatedSeries(y.center, (cols[j].components[i],)) for j in range(d)] for i in range(d)]
    delta = linear_series_solve(A, rho.scaled(-1), M)
    return y + delta


def newton_iterates(ivp: PolyIVP, N: int) -> Iterator[tuple[TruncatedSeries, int]]:
    """Yield ``(y_k, N_k)`` from the constant start until ``N_k >= N``."""
    y, n_k = _initial_series(ivp), 1
    yield y, n_k
    while n_k < N:
        y = newton_step(ivp, y, n_k)
        n_k *= 2
        yield y, n_k


def newton_solve(ivp: PolyIVP, N: int) -> tuple[TruncatedSeries, int]:
    """Order-``N`` Taylor expansion by Newton lifting; returns ``(series, steps)``."""
    if N < 1:
        raise DomainError("order must be positive")
    if ivp.P.is_autonomous and not any(ivp.P.evaluate(ivp.t0, ivp.y0)):
        return _initial_series(ivp, N), 0
    steps = -1
    for y, _ in newton_iterates(ivp, N):
        steps += 1
    return y.truncate(N), steps
