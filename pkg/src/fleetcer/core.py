"""Time model, events, fluents and the maximal-interval algebra.

Time-points are non-negative integers (seconds since epoch).  An interval
``(start, end]`` is open at its start and closed at its end: time-point T
lies inside iff ``start < T <= end``.  ``end=None`` marks an open-ended
interval (no termination seen yet).
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

OPEN = None  # sentinel for an open-ended interval


@dataclass(frozen=True, slots=True)
class EventInstance:
    """A time-stamped input or derived event."""

    event_type: str
    vehicle: str
    occurrence: int
    arrival: int
    args: tuple[float, ...] = ()

    def __post_init__(self):
        if self.arrival < self.occurrence:
            raise ValueError(
                f"arrival {self.arrival} precedes occurrence {self.occurrence}"
            )


@dataclass(frozen=True, slots=True)
class FluentValue:
    """A fluent-value pair for one vehicle (value is always 'true' here)."""

    fluent: str
    vehicle: str
    value: str = "true"


@dataclass(frozen=True, slots=True)
class Interval:
    """Half-open interval (start, end]; end=None means open-ended."""

    start: int
    end: int | None

    def __post_init__(self):
        if self.end is not OPEN and self.end <= self.start:
            raise ValueError(f"empty interval ({self.start}, {self.end}]")

    def contains(self, t: int) -> bool:
        return t > self.start and (self.end is OPEN or t <= self.end)


IntervalList = list  # list[Interval], sorted, disjoint, non-adjacent


def _check_sorted(points: list[int], name: str) -> None:
    if any(points[i] > points[i + 1] for i in range(len(points) - 1)):
        raise ValueError(f"{name} must be sorted ascending")


def make_intervals(initiations: list[int], terminations: list[int]) -> list[Interval]:
    """Build the maximal intervals from initiation and termination points.

    For each earliest uncovered initiation Ts the interval runs to the first
    termination strictly after Ts; initiations falling inside an existing
    interval are absorbed; a termination at exactly Ts does not close the
    interval opened at Ts (weak initiation).  If no termination follows, the
    final interval is open-ended.
    """
    _check_sorted(initiations, "initiations")
    _check_sorted(terminations, "terminations")
    raw: list[tuple[int, int | None]] = []
    for ts in initiations:
        if raw:
            last_end = raw[-1][1]
            if last_end is OPEN or ts < last_end:
                continue  # absorbed
        k = bisect_right(terminations, ts)
        raw.append((ts, terminations[k] if k < len(terminations) else OPEN))
    # coalesce adjacent intervals (an initiation at a prior end point)
    merged: list[Interval] = []
    for start, end in raw:
        if merged and merged[-1].end == start:
            merged[-1] = Interval(merged[-1].start, end)
        else:
            merged.append(Interval(start, end))
    return merged


def holds_at(intervals: list[Interval], t: int) -> bool:
    """True iff t lies in one of the maximal intervals."""
    lo, hi = 0, len(intervals)
    while lo < hi:
        mid = (lo + hi) // 2
        if intervals[mid].start >= t:
            hi = mid
        else:
            lo = mid + 1
    # intervals[lo-1] is the last interval with start < t
    return lo > 0 and intervals[lo - 1].contains(t)


def clip_to_window(
    intervals: list[Interval], window_start: int, window_end: int
) -> list[Interval]:
    """Intersect each interval with (window_start, window_end].

    Open-ended or overrunning intervals are truncated to a closed end at
    window_end; recomputation at the next query restores them.
    """
    if window_start >= window_end:
        raise ValueError("window_start must precede window_end")
    out: list[Interval] = []
    for iv in intervals:
        start = max(iv.start, window_start)
        end = window_end if iv.end is OPEN else min(iv.end, window_end)
        if start < end:
            out.append(Interval(start, end))
    return out


def boundary_events(fv: FluentValue, intervals: list[Interval]) -> list[EventInstance]:
    """start/end built-in events for each maximal interval.

    Open-ended intervals emit only their start event.
    """
    out = []
    for iv in intervals:
        out.append(
            EventInstance(f"start({fv.fluent})", fv.vehicle, iv.start, iv.start)
        )
        if iv.end is not OPEN:
            out.append(EventInstance(f"end({fv.fluent})", fv.vehicle, iv.end, iv.end))
    return out


def format_interval_end(iv: Interval) -> str:
    return "open" if iv.end is OPEN else str(iv.end)


def serialize_intervals(fv: FluentValue, intervals: list[Interval]) -> list[str]:
    """CSV rows `fluent,vehicle,value,start_exclusive,end_inclusive|open`."""
    return [
        f"{fv.fluent},{fv.vehicle},{fv.value},{iv.start},{format_interval_end(iv)}"
        for iv in intervals
    ]
