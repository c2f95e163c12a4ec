import random

import pytest

from fleetcer.core import OPEN, EventInstance, FluentValue, Interval
from fleetcer.patterns import (
    ThresholdRegistry,
    builtin_fleet_patterns,
    parse_pattern_file,
)
from fleetcer.recognizer import RecognitionEngine, WindowConfig, _apply_deadline
from oracle import brute_force_holds, maximal_runs
from synth import make_event_stream

HS = FluentValue("highSpeed", "v1")
DD = FluentValue("dangerousDriving", "v1")
RF = FluentValue("reFuelOpportunity", "v1")


def ev(etype, t, vehicle="v1", arrival=None, args=()):
    return EventInstance(etype, vehicle, t, arrival if arrival is not None else t, args)


def engine(window=600, slide=600, first=600, mode="batch", patterns=None,
           thresholds=None):
    return RecognitionEngine(
        patterns or builtin_fleet_patterns(),
        thresholds or ThresholdRegistry({("*", "speed"): 90.0, ("*", "fuel"): 60.0}),
        WindowConfig(window, slide, first),
        mode=mode,
    )


class TestWindowConfig:
    def test_slide_must_be_positive(self):
        with pytest.raises(ValueError):
            WindowConfig(600, 0, 600)

    def test_window_at_least_slide(self):
        with pytest.raises(ValueError):
            WindowConfig(300, 600, 600)

    def test_window_equal_slide_ok(self):
        WindowConfig(600, 600, 600)


class TestWorkedExample:
    """Speeding starts at 60, harsh cornering at 120, slowdown at 300."""

    EVENTS = [
        ev("moving", 60, args=(100.0,)),
        ev("abruptCornering", 120),
        ev("moving", 300, args=(50.0,)),
    ]

    def run(self, mode):
        eng = engine(mode=mode)
        for e in self.EVENTS:
            eng.ingest(e)
        return eng.evaluate(600)

    @pytest.mark.parametrize("mode", ["batch", "incremental"])
    def test_intervals(self, mode):
        res = self.run(mode)
        assert res.intervals == {
            HS: [Interval(60, 300)],
            DD: [Interval(120, 300)],
        }

    def test_events_consumed(self):
        assert self.run("batch").events_consumed == 3


class TestIngestion:
    def test_old_events_dropped_and_counted(self):
        eng = engine()
        eng.evaluate(600)
        eng.ingest(ev("moving", 0, arrival=700, args=(100.0,)))  # occ <= 600-600
        assert eng.dropped == 1
        eng.ingest(ev("moving", 1, arrival=700, args=(100.0,)))
        assert eng.dropped == 1

    def test_future_arrivals_not_visible_yet(self):
        eng = engine(window=1200, slide=600)
        eng.ingest(ev("moving", 100, arrival=900, args=(100.0,)))
        assert eng.evaluate(600).intervals == {}
        res = eng.evaluate(1200)
        assert res.intervals == {HS: [Interval(100, OPEN)]}

    def test_out_of_order_query_rejected(self):
        eng = engine()
        eng.evaluate(600)
        with pytest.raises(ValueError):
            eng.evaluate(600)
        with pytest.raises(ValueError):
            eng.evaluate(1800)

    def test_buffer_pruned_after_query(self):
        eng = engine()
        eng.ingest(ev("moving", 100, args=(50.0,)))
        eng.evaluate(600)
        assert eng._buffer  # occurrence 100 > 600 - window, still retained
        eng.evaluate(1200)  # cutoff moves to 600; the event falls out
        assert not eng._buffer


class TestDelayedRetention:
    """A delayed termination arriving later must retroactively shrink the
    interval at the next query while the support is still in the window."""

    def test_late_termination_shrinks_interval(self):
        eng = engine(window=1200, slide=600)
        eng.ingest(ev("moving", 100, args=(120.0,)))
        res1 = eng.evaluate(600)
        assert res1.intervals == {HS: [Interval(100, OPEN)]}
        # the slowdown happened at 400 but arrives in (600, 1200]
        eng.ingest(ev("moving", 400, arrival=800, args=(30.0,)))
        res2 = eng.evaluate(1200)
        assert res2.intervals == {HS: [Interval(100, 400)]}

    def test_incremental_matches_on_late_termination(self):
        for mode in ("batch", "incremental"):
            eng = engine(window=1200, slide=600, mode=mode)
            eng.ingest(ev("moving", 100, args=(120.0,)))
            eng.evaluate(600)
            eng.ingest(ev("moving", 400, arrival=800, args=(30.0,)))
            res = eng.evaluate(1200)
            assert res.intervals == {HS: [Interval(100, 400)]}


class TestAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(8))
    def test_random_small_streams(self, seed):
        events = _small_stream(seed)
        eng = engine(window=60, slide=60, first=60)
        for e in events:
            eng.ingest(e)
        res = eng.evaluate(60)
        oracle = brute_force_holds(events, "v1", 0, 60)
        for name, holds in oracle.items():
            expected = [
                Interval(s, e if e < 60 or not holds[60] else OPEN)
                for s, e in maximal_runs(holds)
            ]
            expected = [
                iv if not (iv.end == 60 and holds[60]) else Interval(iv.start, OPEN)
                for iv in expected
            ]
            got = res.intervals.get(FluentValue(name, "v1"), [])
            for t in range(1, 61):
                from fleetcer.core import holds_at
                assert holds_at(got, t) == holds[t], (name, t, got, holds)


def _small_stream(seed):
    rng = random.Random(seed)
    events = []
    for t in range(1, 56):
        if rng.random() < 0.5:
            continue
        if rng.random() < 0.85:
            events.append(ev("moving", t, args=(rng.choice([40.0, 120.0]),)))
        else:
            events.append(ev("stopped", t))
        if rng.random() < 0.25:
            events.append(ev(rng.choice(
                ["abruptAcceleration", "abruptDeceleration",
                 "abruptCornering", "iceOnRoad"]), t))
        if rng.random() < 0.2:
            events.append(ev("fuelLevel", t, args=(rng.choice([10.0, 50.0]),)))
        if rng.random() < 0.15:
            events.append(ev("closeToGas", t))
    return events


def _inject(events, fraction, seed, max_delay=3600):
    rng = random.Random(seed)
    out = []
    for e in events:
        d = rng.randrange(max_delay) if rng.random() < fraction else 0
        out.append(EventInstance(e.event_type, e.vehicle, e.occurrence,
                                 e.arrival + d, e.args))
    out.sort(key=lambda e: (e.arrival, e.occurrence, e.vehicle, e.event_type))
    return out


def _run_stream(events, window, slide, mode):
    eng = engine(window=window, slide=slide, first=slide, mode=mode)
    results = {}
    first = eng.next_query_time()
    start = (min(e.occurrence for e in events) // slide) * slide + slide
    # align the first query with the earliest occurrence
    eng.last_query = start - slide
    for res in eng.run(events):
        results[res.query_time] = res.intervals
    return results


class TestIncrementalEquivalence:
    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("window,slide", [(3600, 3600), (7200, 3600)])
    def test_matches_batch_under_delays(self, seed, window, slide):
        base = make_event_stream(300, n_vehicles=3, seed=seed, horizon_s=12 * 3600)
        events = _inject(base, 0.3, seed)
        got_b = _run_stream(events, window, slide, "batch")
        got_i = _run_stream(events, window, slide, "incremental")
        assert got_b == got_i

    def test_determinism_under_ingestion_order(self):
        base = make_event_stream(120, n_vehicles=2, seed=5, horizon_s=4 * 3600)
        eng1, eng2 = engine(3600, 3600, 3600 * 430085), engine(3600, 3600, 3600 * 430085)
        start = (min(e.occurrence for e in base) // 3600) * 3600
        for eng in (eng1, eng2):
            eng.last_query = start
        shuffled = list(base)
        random.Random(1).shuffle(shuffled)
        for e in base:
            eng1.ingest(e)
        for e in shuffled:
            eng2.ingest(e)
        q = start + 3600
        assert eng1.evaluate(q).intervals == eng2.evaluate(q).intervals


class TestIsolationAndContainment:
    def test_vehicles_do_not_interact(self):
        eng = engine()
        eng.ingest(ev("moving", 100, vehicle="a", args=(120.0,)))
        eng.ingest(ev("moving", 200, vehicle="b", args=(30.0,)))
        res = eng.evaluate(600)
        assert res.intervals == {FluentValue("highSpeed", "a"): [Interval(100, OPEN)]}

    def test_reported_intervals_stay_inside_window(self):
        events = make_event_stream(200, n_vehicles=3, seed=9, horizon_s=8 * 3600)
        results = _run_stream(events, 3600, 3600, "batch")
        for q, intervals in results.items():
            for ivs in intervals.values():
                for iv in ivs:
                    assert q - 3600 <= iv.start < q
                    if iv.end is not OPEN:
                        assert iv.start < iv.end <= q

    def test_empty_insertions_reuse_previous_points(self):
        eng = engine(window=1800, slide=600, mode="incremental")
        eng.ingest(ev("moving", 100, args=(120.0,)))
        res1 = eng.evaluate(600)
        res2 = eng.evaluate(1200)  # no new arrivals
        assert res1.intervals == res2.intervals == {HS: [Interval(100, OPEN)]}


class TestDeadlines:
    PATTERNS = parse_pattern_file(
        "fluent nearStation deadline 120\n"
        "  init when closeToGas()\n"
        "  term when moving(S) if S > threshold(speed)\n"
    )

    def eng(self, mode="batch"):
        return engine(patterns=self.PATTERNS, mode=mode)

    def test_deadline_fires(self):
        eng = self.eng()
        eng.ingest(ev("closeToGas", 100))
        res = eng.evaluate(600)
        assert res.intervals == {
            FluentValue("nearStation", "v1"): [Interval(100, 220)]
        }

    def test_natural_termination_suppresses_deadline(self):
        eng = self.eng()
        eng.ingest(ev("closeToGas", 100))
        eng.ingest(ev("moving", 150, args=(120.0,)))
        res = eng.evaluate(600)
        assert res.intervals == {
            FluentValue("nearStation", "v1"): [Interval(100, 150)]
        }

    def test_reinitiation_extends_deadline(self):
        eng = self.eng()
        eng.ingest(ev("closeToGas", 100))
        eng.ingest(ev("closeToGas", 180))
        res = eng.evaluate(600)
        assert res.intervals == {
            FluentValue("nearStation", "v1"): [Interval(100, 300)]
        }

    def test_apply_deadline_unit(self):
        assert _apply_deadline([100], [], 120) == [220]
        assert _apply_deadline([100], [150], 120) == [150]
        assert _apply_deadline([100, 180], [], 120) == [300]
        assert _apply_deadline([100], [500], 120) == [220, 500]

    def test_incremental_matches(self):
        for fixture in ("plain", "suppressed"):
            per_mode = {}
            for mode in ("batch", "incremental"):
                eng = self.eng(mode)
                eng.ingest(ev("closeToGas", 100))
                if fixture == "suppressed":
                    eng.ingest(ev("moving", 150, args=(120.0,)))
                eng.evaluate(600)
                per_mode[mode] = eng.evaluate(1200).intervals
            assert per_mode["batch"] == per_mode["incremental"]


class TestResultSerialization:
    def test_open_interval_rows(self):
        eng = engine()
        eng.ingest(ev("moving", 100, args=(120.0,)))
        res = eng.evaluate(600)
        assert res.csv_rows() == ["highSpeed,v1,100,open,600"]

    def test_metrics_row_shape(self):
        eng = engine()
        res = eng.evaluate(600)
        q, ms, consumed, dropped = res.metrics_row().split(",")
        assert (q, consumed, dropped) == ("600", "0", "0")
        assert float(ms) >= 0


class TestRunDriver:
    def test_queries_follow_the_slide_grid(self):
        events = [ev("moving", 700, arrival=700, args=(120.0,)),
                  ev("moving", 1500, arrival=1500, args=(30.0,))]
        eng = engine(window=600, slide=600, first=600)
        times = [r.query_time for r in eng.run(events, until=1800)]
        assert times == [600, 1200, 1800]

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            engine(mode="magic")
