"""Outward-rounded enclosures of elementary functions at rational points.

Thin wrappers over ``mpmath.iv`` that hand back dyadic ``Interval`` values,
so callers never see binary floats.
"""

from __future__ import annotations

from contextlib import contextmanager
from fractions import Fraction

from mpmath import iv

from .series import Interval, as_rational


@contextmanager
def working_precision(prec: int):
    saved = iv.prec
    iv.prec = prec
    try:
        yield
    finally:
        iv.prec = saved


def to_iv(q, prec: int = 64):
    """``mpmath.iv`` enclosure of a rational."""
    q = as_rational(q)
    with working_precision(prec):
        return iv.mpf(q.numerator) / iv.mpf(q.denominator)


def _apply(fn, q, prec: int) -> Interval:
    with working_precision(prec):
        return Interval.from_mpi(fn(to_iv(q, prec)))


def exp_enclosure(q, prec: int = 64) -> Interval:
    return _apply(iv.exp, q, prec)


def log_enclosure(q, prec: int = 64) -> Interval:
    if as_rational(q) <= 0:
        raise ValueError("logarithm of a non-positive number")
    return _apply(iv.log, q, prec)


def sqrt_enclosure(q, prec: int = 64) -> Interval:
    if as_rational(q) < 0:
        raise ValueError("square root of a negative number")
    return _apply(iv.sqrt, q, prec)


def power_enclosure(q, p, prec: int = 64) -> Interval:
    """``q ** p`` for ``q >= 0`` and rational ``p``."""
    q, p = as_rational(q), as_rational(p)
    if q < 0:
        raise ValueError("fractional power of a negative number")
    if q == 0:
        return Interval.point(0)
    with working_precision(prec):
        return Interval.from_mpi(to_iv(q, prec) ** to_iv(p, prec))


def exp_upper(q, prec: int = 64) -> Fraction:
    return exp_enclosure(q, prec).hi.to_fraction()
