"""Sampling-instant sequences that realize specified-time convergence.

Three interval sequences are provided, all parameterized by the
settling time T_c:

* ``basel``: T_k = 6*T_c/(pi*k)^2. The series sums exactly to T_c, so
  infinitely many samples are packed before the deadline (Zeno at T_c).
* ``truncated``: basel intervals up to index k_eps, then a constant
  interval eps forever. Zeno-free; the price is that convergence at T_c
  is approximate, with the accuracy bound certified elsewhere.
* ``power``: T_k = T_c*(1-b)*b^(k-1), a geometric alternative whose
  instants admit the closed form t_k = T_c*(1 - b^k).

Instants t_k are partial sums of the intervals and are always produced
by compensated accumulation, since 1e4+ tiny terms must land within
1e-12 of T_c. ``instant`` and ``iter_instants`` share the accumulation
routine, so their values agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

__all__ = [
    "ZenoUnboundedError",
    "SamplingSchedule",
    "interval",
    "instant",
    "iter_instants",
    "steps_before",
]

# Hard cap on scanned instants; a horizon pathologically close to T_c on a
# basel/power schedule is rejected rather than scanned for hours.
_MAX_SCAN = 5_000_000


class ZenoUnboundedError(ValueError):
    """The queried horizon admits infinitely many sampling instants."""


class _CompensatedSum:
    """Running sum with a carried roundoff correction."""

    __slots__ = ("total", "_carry")

    def __init__(self) -> None:
        self.total = 0.0
        self._carry = 0.0

    def add(self, term: float) -> float:
        term += self._carry
        previous = self.total
        self.total = previous + term
        self._carry = term - (self.total - previous)
        return self.total


@dataclass(frozen=True)
class SamplingSchedule:
    """Immutable sampling-interval sequence of one of the three kinds.

    Fields irrelevant to a kind stay None. Use the ``basel``,
    ``truncated``, and ``power`` constructors rather than filling fields
    by hand.
    """

    kind: str
    t_c: float
    k_eps: int | None = None
    eps: float | None = None
    b: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("basel", "truncated", "power"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not (math.isfinite(self.t_c) and self.t_c > 0.0):
            raise ValueError(f"settling time must be positive, got {self.t_c}")
        if self.kind == "truncated":
            if self.k_eps is None or self.k_eps < 1 or int(self.k_eps) != self.k_eps:
                raise ValueError(f"k_eps must be a positive integer, got {self.k_eps}")
            if self.eps is None or not (math.isfinite(self.eps) and self.eps > 0.0):
                raise ValueError(f"eps must be positive, got {self.eps}")
        elif self.k_eps is not None or self.eps is not None:
            raise ValueError("k_eps/eps only apply to the truncated kind")
        if self.kind == "power":
            if self.b is None or not 0.0 < self.b < 1.0:
                raise ValueError(f"power ratio must lie in (0,1), got {self.b}")
        elif self.b is not None:
            raise ValueError("ratio b only applies to the power kind")

    @staticmethod
    def basel(t_c: float) -> "SamplingSchedule":
        """Intervals 6*T_c/(pi*k)^2, summing exactly to T_c."""
        return SamplingSchedule(kind="basel", t_c=float(t_c))

    @staticmethod
    def truncated(t_c: float, k_eps: int, eps: float) -> "SamplingSchedule":
        """Basel intervals through k_eps, then constant eps forever."""
        return SamplingSchedule(
            kind="truncated", t_c=float(t_c), k_eps=int(k_eps), eps=float(eps)
        )

    @staticmethod
    def power(t_c: float, b: float) -> "SamplingSchedule":
        """Geometric intervals T_c*(1-b)*b^(k-1)."""
        return SamplingSchedule(kind="power", t_c=float(t_c), b=float(b))


def interval(s: SamplingSchedule, k: int) -> float:
    """Length T_k of the k-th sampling interval, k >= 1."""
    if k < 1 or int(k) != k:
        raise ValueError(f"interval index must be a positive integer, got {k}")
    if s.kind == "basel":
        return 6.0 * s.t_c / (math.pi * k) ** 2
    if s.kind == "truncated":
        if k <= s.k_eps:
            return 6.0 * s.t_c / (math.pi * k) ** 2
        return s.eps
    return s.t_c * (1.0 - s.b) * s.b ** (k - 1)


def instant(s: SamplingSchedule, k: int) -> float:
    """Sampling instant t_k, the compensated partial sum of intervals 1..k."""
    if k < 0 or int(k) != k:
        raise ValueError(f"instant index must be a nonnegative integer, got {k}")
    acc = _CompensatedSum()
    t = 0.0
    for j in range(1, k + 1):
        t = acc.add(interval(s, j))
    return t


def iter_instants(s: SamplingSchedule) -> Iterator[tuple[int, float, float]]:
    """Yield (k, t_k, T_k) for k = 0, 1, 2, ... without ever terminating.

    The k = 0 entry carries t_0 = 0 and an interval of 0. Accumulation
    matches ``instant`` exactly, so consumers may mix the two freely.
    """
    yield 0, 0.0, 0.0
    acc = _CompensatedSum()
    k = 1
    while True:
        t_k = interval(s, k)
        yield k, acc.add(t_k), t_k
        k += 1


def steps_before(s: SamplingSchedule, horizon: float) -> int:
    """Number of sampling instants t_k strictly below the horizon.

    The count includes the initial instant t_0 = 0 whenever the horizon
    is positive. For the truncated kind with a horizon past t_{k_eps}
    the count is the exact closed form
    ``k_eps + ceil((horizon - t_{k_eps})/eps)``; other cases scan the
    accumulated instants.

    Raises:
        ZenoUnboundedError: basel/power schedule with horizon >= T_c
            (every one of the infinitely many instants lies below such a
            horizon).
        ValueError: non-finite horizon, or a scan exceeding an internal
            cap because the horizon sits pathologically close to T_c.
    """
    horizon = float(horizon)
    if not math.isfinite(horizon):
        raise ValueError(f"horizon must be finite, got {horizon}")
    if horizon <= 0.0:
        return 0
    if s.kind != "truncated" and horizon >= s.t_c:
        raise ZenoUnboundedError(
            f"{s.kind} schedule accumulates infinitely many instants before "
            f"t = {s.t_c}; a horizon of {horizon} is unbounded. Use the "
            "truncated kind for horizons at or past the settling time."
        )
    if s.kind == "truncated":
        t_ke = instant(s, s.k_eps)
        if horizon > t_ke:
            return s.k_eps + math.ceil((horizon - t_ke) / s.eps)
    count = 0
    for k, t_k, _ in iter_instants(s):
        if t_k >= horizon:
            return count
        count += 1
        if count > _MAX_SCAN:
            raise ValueError(
                f"more than {_MAX_SCAN} instants below horizon {horizon}; "
                "the horizon sits too close to the settling time"
            )
    raise AssertionError("unreachable")
