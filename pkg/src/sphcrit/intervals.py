"""Real intervals with half-open ``[lo, hi)`` membership and a small text syntax."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np


class IntervalSyntaxError(ValueError):
    """Raised for malformed interval text or an empty interval."""


@dataclass(frozen=True)
class Interval:
    """Interval of critical values.

    Membership is half-open, ``lo <= t < hi``; ``Interval.real()`` is the
    whole line.
    """

    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or not self.lo < self.hi:
            raise IntervalSyntaxError(f"need lo < hi, got ({self.lo}, {self.hi})")

    @classmethod
    def real(cls) -> "Interval":
        return cls(-math.inf, math.inf)

    @property
    def is_real(self) -> bool:
        return self.lo == -math.inf and self.hi == math.inf

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.lo) & (t < self.hi)

    def reflect(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def clipped(self, cut: float) -> tuple[float, float]:
        return max(self.lo, -cut), min(self.hi, cut)

    def to_text(self) -> str:
        if self.is_real:
            return "R"
        return f"({_fmt(self.lo)},{_fmt(self.hi)})"

    def __str__(self) -> str:
        return self.to_text()


def _fmt(x: float) -> str:
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return repr(float(x))


_NUM = r"\s*([+-]?(?:inf|infinity|[0-9.]+(?:[eE][+-]?[0-9]+)?))\s*"
_PATTERN = re.compile(r"^\s*[\(\[]" + _NUM + "," + _NUM + r"[\)\]]\s*$", re.IGNORECASE)


def parse_interval(text: str) -> Interval:
    """Parse ``"R"``, ``"(a,b)"``, ``"(-inf,b)"`` or ``"(a,inf)"``.

    Brackets are accepted for readability but the membership rule is always
    ``[lo, hi)``.
    """
    stripped = text.strip()
    if stripped.upper() in {"R", "(-INF,INF)"}:
        return Interval.real()
    match = _PATTERN.match(stripped)
    if match is None:
        raise IntervalSyntaxError(
            f"cannot parse interval {text!r}; use R, (a,b), (-inf,b) or (a,inf)"
        )
    try:
        lo, hi = float(match.group(1)), float(match.group(2))
    except ValueError as exc:
        raise IntervalSyntaxError(f"bad number in {text!r}") from exc
    return Interval(lo, hi)
