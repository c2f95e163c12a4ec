"""Windowed query-time evaluation of a pattern set over buffered events.

At each query time qi the engine derives, per vehicle and per fluent (in
stratum order), the initiation/termination time-points from the events
with occurrence in (qi - window, qi] that have arrived by qi, and turns
them into maximal intervals.

Two modes:

* ``batch``        -- every query recomputes all points from the window.
* ``incremental``  -- points derived at the previous query are retained
  (filtered to the new window) and delta rules are evaluated only over the
  occurrences that arrived since the previous query.  Whenever the
  intervals of a lower-stratum dependency changed inside the current
  window (delayed events can shrink or split them, and window sliding can
  drop their support), the affected fluent/vehicle pair is re-derived from
  scratch, so both modes always produce identical intervals.
"""

from __future__ import annotations

import time
from bisect import bisect_right, insort
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator

from .core import (
    OPEN,
    EventInstance,
    FluentValue,
    Interval,
    clip_to_window,
    format_interval_end,
    holds_at,
    make_intervals,
)
from .patterns import PatternSet, Rule, ThresholdRegistry


@dataclass(frozen=True)
class WindowConfig:
    window_s: int
    slide_s: int
    first_query: int

    def __post_init__(self):
        if self.slide_s <= 0:
            raise ValueError("slide step must be positive")
        if self.window_s < self.slide_s:
            raise ValueError("window must be at least as long as the slide step")


@dataclass
class RecognitionResult:
    query_time: int
    intervals: dict[FluentValue, list[Interval]]
    recognition_ms: float
    events_consumed: int
    dropped: int

    def csv_rows(self) -> list[str]:
        """`fluent,vehicle,start_exclusive,end_inclusive|open,query_time`."""
        rows = []
        for fv in sorted(self.intervals, key=lambda f: (f.fluent, f.vehicle)):
            for iv in self.intervals[fv]:
                rows.append(
                    f"{fv.fluent},{fv.vehicle},{iv.start},"
                    f"{format_interval_end(iv)},{self.query_time}"
                )
        return rows

    def metrics_row(self) -> str:
        return (
            f"{self.query_time},{self.recognition_ms:.3f},"
            f"{self.events_consumed},{self.dropped}"
        )


def _dedup_sorted(points: list[int]) -> list[int]:
    points.sort()
    out = []
    last = None
    for p in points:
        if p != last:
            out.append(p)
            last = p
    return out


def _apply_deadline(inits: list[int], terms: list[int], deadline: int) -> list[int]:
    """Add a synthetic termination `deadline` after the last initiation.

    A candidate at Ts+deadline is suppressed by a natural termination or a
    re-initiation inside (Ts, Ts+deadline].
    """
    extra = []
    for idx, ts in enumerate(inits):
        cand = ts + deadline
        k = bisect_right(terms, ts)
        if k < len(terms) and terms[k] <= cand:
            continue
        if idx + 1 < len(inits) and inits[idx + 1] <= cand:
            continue
        extra.append(cand)
    if not extra:
        return terms
    return sorted(terms + extra)


class RecognitionEngine:
    """Single-threaded engine for one vehicle partition."""

    def __init__(
        self,
        patterns: PatternSet,
        thresholds: ThresholdRegistry,
        window: WindowConfig,
        mode: str = "batch",
    ):
        if mode not in ("batch", "incremental"):
            raise ValueError(f"unknown mode {mode!r}")
        self.patterns = patterns
        self.thresholds = thresholds
        self.window = window
        self.mode = mode
        self.last_query = window.first_query - window.slide_s
        self.dropped = 0
        # (vehicle, event_type) -> ([occurrence...], [(occurrence, arrival, args)...])
        self._buffer: dict[tuple[str, str], tuple[list[int], list[tuple]]] = {}
        # previous query's derived natural points / raw intervals, per (vehicle, fluent)
        self._prev_points: dict[tuple[str, str], tuple[list[int], list[int]]] = {}
        self._prev_raw: dict[tuple[str, str], list[Interval]] = {}
        self._threshold_cache: dict[tuple[str, str], float] = {}

    # -- ingestion -----------------------------------------------------------

    def ingest(self, event: EventInstance) -> None:
        if event.occurrence <= self.last_query - self.window.window_s:
            self.dropped += 1
            return
        key = (event.vehicle, event.event_type)
        entry = self._buffer.get(key)
        if entry is None:
            entry = ([], [])
            self._buffer[key] = entry
        occs, rows = entry
        i = bisect_right(occs, event.occurrence)
        occs.insert(i, event.occurrence)
        rows.insert(i, (event.occurrence, event.arrival, event.args))

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, qi: int) -> RecognitionResult:
        expected = self.last_query + self.window.slide_s
        if qi != expected:
            raise ValueError(f"out-of-order query time {qi}, expected {expected}")
        t0 = time.perf_counter()
        ws = qi - self.window.window_s
        prev_q = self.last_query

        vehicles = sorted(
            {
                v
                for (v, _etype), (occs, _rows) in self._buffer.items()
                if bisect_right(occs, qi) > bisect_right(occs, ws)
            }
        )

        occ_cache: dict[tuple[str, str, str], list[tuple[int, tuple]]] = {}

        def occurrences(vehicle: str, etype: str, cls: str) -> list[tuple[int, tuple]]:
            ck = (vehicle, etype, cls)
            hit = occ_cache.get(ck)
            if hit is not None:
                return hit
            entry = self._buffer.get((vehicle, etype))
            out: list[tuple[int, tuple]] = []
            if entry is not None:
                occs, rows = entry
                lo, hi = bisect_right(occs, ws), bisect_right(occs, qi)
                for occ, arr, args in rows[lo:hi]:
                    if arr > qi:
                        continue
                    if cls == "ins" and arr <= prev_q:
                        continue
                    if cls == "old" and arr > prev_q:
                        continue
                    out.append((occ, args))
            occ_cache[ck] = out
            return out

        raw_now: dict[tuple[str, str], list[Interval]] = {}
        points_now: dict[tuple[str, str], tuple[list[int], list[int]]] = {}
        boundaries: dict[tuple[str, str], list[tuple[int, tuple]]] = {}

        def boundary_occurrences(vehicle: str, key: str) -> list[tuple[int, tuple]]:
            # key is "end(F)" or "start(F)"; computed from this query's intervals
            return boundaries.get((vehicle, key), [])

        def trigger_occurrences(vehicle, trig, cls):
            if trig.boundary_of is not None:
                if cls == "ins":  # only reached when boundaries are unchanged
                    return []
                return boundary_occurrences(vehicle, trig.key())
            return occurrences(vehicle, trig.event_type, cls)

        def threshold(vehicle: str, param: str) -> float:
            ck = (vehicle, param)
            val = self._threshold_cache.get(ck)
            if val is None:
                val = self.thresholds.lookup(vehicle, param)
                self._threshold_cache[ck] = val
            return val

        def eval_rule(vehicle: str, rule: Rule, classes: tuple[str, ...]) -> list[int]:
            sources = [
                trigger_occurrences(vehicle, trig, cls)
                for trig, cls in zip(rule.triggers, classes)
            ]
            if not all(sources):
                return []
            points: list[int] = []
            guard_ivs = [raw_now.get((vehicle, g), []) for g in rule.guards]
            if len(sources) == 1:
                trig = rule.triggers[0]
                for t, args in sources[0]:
                    binding = dict(zip(trig.args, args))
                    if all(
                        c.holds(binding[c.arg], threshold(vehicle, c.param))
                        for c in rule.comparisons
                    ) and all(holds_at(ivs, t) for ivs in guard_ivs):
                        points.append(t)
                return points
            # multi-trigger: all atoms must share the same time-point
            by_time: list[dict[int, list[tuple]]] = []
            for src in sources[1:]:
                d: dict[int, list[tuple]] = {}
                for t, args in src:
                    d.setdefault(t, []).append(args)
                by_time.append(d)
            for t, args0 in sources[0]:
                groups = [d.get(t) for d in by_time]
                if not all(groups):
                    continue
                if not all(holds_at(ivs, t) for ivs in guard_ivs):
                    continue
                for combo in product(*groups):
                    binding = dict(zip(rule.triggers[0].args, args0))
                    for trig, args in zip(rule.triggers[1:], combo):
                        binding.update(zip(trig.args, args))
                    if all(
                        c.holds(binding[c.arg], threshold(vehicle, c.param))
                        for c in rule.comparisons
                    ):
                        points.append(t)
                        break
            return points

        def full_points(vehicle: str, rules: tuple[Rule, ...]) -> list[int]:
            pts: list[int] = []
            for rule in rules:
                pts.extend(eval_rule(vehicle, rule, ("all",) * len(rule.triggers)))
            return _dedup_sorted(pts)

        def delta_points(vehicle: str, rules: tuple[Rule, ...]) -> list[int]:
            # one delta variant per trigger atom: atom j over ins, atoms
            # before j over the whole window, atoms after j over the
            # occurrences already present at the previous query
            pts: list[int] = []
            for rule in rules:
                n = len(rule.triggers)
                for j in range(n):
                    classes = tuple(
                        "ins" if k == j else ("all" if k < j else "old")
                        for k in range(n)
                    )
                    pts.extend(eval_rule(vehicle, rule, classes))
            return pts

        def clipped_eq(a: list[Interval], b: list[Interval]) -> bool:
            return clip_to_window(a, ws, qi) == clip_to_window(b, ws, qi)

        def in_window_bounds(ivs: list[Interval]) -> tuple[tuple[int, ...], tuple[int, ...]]:
            starts = tuple(iv.start for iv in ivs if ws < iv.start <= qi)
            ends = tuple(
                iv.end for iv in ivs if iv.end is not OPEN and ws < iv.end <= qi
            )
            return starts, ends

        incremental = self.mode == "incremental"

        for vehicle in vehicles:
            changed_fluents: set[str] = set()
            for stratum in self.patterns.strata:
                for name in stratum:
                    fd = self.patterns.fluents[name]
                    key = (vehicle, name)
                    prev = self._prev_points.get(key) if incremental else None
                    deps_changed = any(
                        d in changed_fluents for d in fd.dependencies()
                    )
                    if prev is None or deps_changed:
                        inits = full_points(vehicle, fd.init_rules)
                        terms = full_points(vehicle, fd.term_rules)
                    else:
                        prev_inits, prev_terms = prev
                        inits = [t for t in prev_inits if ws < t <= qi]
                        terms = [t for t in prev_terms if ws < t <= qi]
                        inits.extend(delta_points(vehicle, fd.init_rules))
                        terms.extend(delta_points(vehicle, fd.term_rules))
                        inits = _dedup_sorted(inits)
                        terms = _dedup_sorted(terms)
                    points_now[key] = (inits, terms)
                    eff_terms = (
                        _apply_deadline(inits, terms, fd.deadline)
                        if fd.deadline is not None
                        else terms
                    )
                    raw = make_intervals(inits, eff_terms)
                    raw_now[key] = raw
                    if incremental:
                        old_raw = self._prev_raw.get(key, [])
                        if not clipped_eq(old_raw, raw) or in_window_bounds(
                            old_raw
                        ) != in_window_bounds(raw):
                            changed_fluents.add(name)
                    starts, ends = [], []
                    for iv in raw:
                        if ws < iv.start <= qi:
                            starts.append((iv.start, ()))
                        if iv.end is not OPEN and ws < iv.end <= qi:
                            ends.append((iv.end, ()))
                    boundaries[(vehicle, f"start({name})")] = starts
                    boundaries[(vehicle, f"end({name})")] = ends

        # assemble the result: clip to the window, keep open ends reported open
        intervals: dict[FluentValue, list[Interval]] = {}
        for (vehicle, name), raw in raw_now.items():
            out: list[Interval] = []
            for iv in raw:
                start = max(iv.start, ws)
                if iv.end is OPEN:
                    if start < qi:
                        out.append(Interval(start, OPEN))
                else:
                    end = min(iv.end, qi)
                    if start < end:
                        out.append(Interval(start, end))
            if out:
                intervals[FluentValue(name, vehicle)] = out

        events_consumed = 0
        for (v, etype), (occs, rows) in self._buffer.items():
            lo, hi = bisect_right(occs, ws), bisect_right(occs, qi)
            events_consumed += sum(1 for occ, arr, _ in rows[lo:hi] if arr <= qi)

        self._prev_points = points_now
        self._prev_raw = raw_now
        self.last_query = qi
        self._prune(qi - self.window.window_s)

        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        return RecognitionResult(qi, intervals, elapsed_ms, events_consumed, self.dropped)

    def _prune(self, cutoff: int) -> None:
        dead = []
        for key, (occs, rows) in self._buffer.items():
            k = bisect_right(occs, cutoff)
            if k:
                del occs[:k]
                del rows[:k]
            if not occs:
                dead.append(key)
        for key in dead:
            del self._buffer[key]

    # -- replay driving ------------------------------------------------------

    def next_query_time(self) -> int:
        return self.last_query + self.window.slide_s

    def run(
        self, events: Iterable[EventInstance], until: int | None = None
    ) -> Iterator[RecognitionResult]:
        """Consume arrival-ordered events, evaluating each due query time.

        After the stream ends, evaluation continues on the slide grid until
        `until` (inclusive), or until the grid passes the last arrival.
        """
        last_arrival = self.last_query
        for event in events:
            while event.arrival > self.next_query_time():
                yield self.evaluate(self.next_query_time())
            last_arrival = max(last_arrival, event.arrival)
            self.ingest(event)
        end = until if until is not None else last_arrival
        while self.last_query < end:
            yield self.evaluate(self.next_query_time())
