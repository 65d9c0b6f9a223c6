"""Consensus schedules ``k -> t(k)`` (rounds of mixing before gradient step ``k``)."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["ConsensusSchedule", "SCHEDULE_KINDS"]

SCHEDULE_KINDS = ("fixed", "linear", "doubling", "logarithmic")


@dataclass(frozen=True)
class ConsensusSchedule:
    """Iterations are numbered from 1.

    - ``fixed``: ``t(k) = t``
    - ``linear``: ``t(k) = k``
    - ``doubling``: ``t(k) = t * 2**((k - 1) // period)``
    - ``logarithmic``: ``t(k) = max(1, ceil(log2(k + 1)))``
    """

    kind: str = "fixed"
    t: int = 1
    period: int = 500

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if self.t < 1:
            raise ValueError(f"need t >= 1, got {self.t}")
        if self.kind == "doubling" and self.period < 1:
            raise ValueError(f"doubling period must be >= 1, got {self.period}")

    def __call__(self, k: int) -> int:
        if k < 1:
            raise ValueError(f"iterations start at 1, got k={k}")
        if self.kind == "fixed":
            return self.t
        if self.kind == "linear":
            return k
        if self.kind == "doubling":
            return self.t << ((k - 1) // self.period)
        # ceil(log2(k + 1)) == bit length of k for k >= 1
        return max(1, k.bit_length())

    def total_rounds(self, k: int) -> int:
        """Cumulative rounds after ``k`` iterations."""
        if self.kind == "fixed":
            return self.t * k
        if self.kind == "linear":
            return k * (k + 1) // 2
        return sum(self(j) for j in range(1, k + 1))

    @classmethod
    def parse(cls, text: str) -> "ConsensusSchedule":
        """Accepts ``fixed:T``, a bare integer, ``linear`` (or ``k``), ``doubling:M[:T]`` and ``log``."""
        text = text.strip().lower()
        head, _, rest = text.partition(":")
        if head.isdigit():
            return cls("fixed", t=int(head))
        if head == "fixed":
            return cls("fixed", t=int(rest or 1))
        if head in ("linear", "k"):
            return cls("linear")
        if head in ("log", "logarithmic"):
            return cls("logarithmic")
        if head == "doubling":
            period, _, start = rest.partition(":")
            return cls("doubling", t=int(start or 1), period=int(period))
        raise ValueError(f"cannot parse schedule {text!r}")

    def __str__(self):
        if self.kind == "fixed":
            return f"fixed:{self.t}"
        if self.kind == "doubling":
            return f"doubling:{self.period}:{self.t}"
        return self.kind
