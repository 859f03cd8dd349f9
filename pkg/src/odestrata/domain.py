from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import DomainError
from .series import as_rational


@dataclass(frozen=True)
class RectDomain:
    """Rectangle ``[t_start, t_end] x prod_j [lo_j, hi_j]``."""

    t_start: Fraction
    t_end: Fraction
    box: tuple

    def __post_init__(self):
        t0, t1 = as_rational(self.t_start), as_rational(self.t_end)
        box = tuple((as_rational(lo), as_rational(hi)) for lo, hi in self.box)
        if not t0 < t1:
            raise DomainError(f"empty time interval [{t0}, {t1}]")
        for lo, hi in box:
            if hi < lo:
                raise DomainError(f"empty space interval [{lo}, {hi}]")
        object.__setattr__(self, "t_start", t0)
        object.__setattr__(self, "t_end", t1)
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return len(self.box)

    def contains(self, t, y: Sequence) -> bool:
        t = as_rational(t)
        if not self.t_start <= t <= self.t_end:
            return False
        return all(lo <= as_rational(v) <= hi for v, (lo, hi) in zip(y, self.box))

    def space_distance(self, y: Sequence) -> Fraction:
        """Sup-norm distance from ``y`` to the boundary of the space box."""
        return min(min(as_rational(v) - lo, hi - as_rational(v)) for v, (lo, hi) in zip(y, self.box))

    def with_time(self, t_start, t_end) -> "RectDomain":
        return RectDomain(t_start, t_end, self.box)

    def with_box(self, box) -> "RectDomain":
        return RectDomain(self.t_start, self.t_end, box)

    def __str__(self) -> str:
        parts = [f"[{self.t_start},{self.t_end}]"] + [f"[{lo},{hi}]" for lo, hi in self.box]
        return "x".join(parts)
