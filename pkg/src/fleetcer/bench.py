"""Pipeline orchestration, vehicle partitioning and benchmark metrics.

The full pipeline is: validate -> weather enrich -> POI enrich -> event
derivation -> optional delay injection -> partition by vehicle -> one
recognition engine per worker -> merged interval output plus a report.
Workers are independent processes sharing only the immutable pattern set;
merged multi-worker output is identical to a single-worker run.
"""

from __future__ import annotations

import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .core import EventInstance, format_interval_end
from .patterns import (
    PatternSet,
    ThresholdRegistry,
    builtin_fleet_patterns,
    parse_pattern_file,
)
from .poi import DEFAULT_THETA_M, PoiEnricher, load_pois
from .recognizer import RecognitionEngine, WindowConfig
from .streamio import DelayConfig, frame_to_events, inject_delays
from .weather import DEFAULT_ICE_PREDICATE, IcePredicate, WeatherEnricher, validate_record

#: placeholder defaults; real deployments supply a threshold CSV
DEFAULT_THRESHOLDS = {("*", "speed"): 90.0, ("*", "fuel"): 60.0}


class PipelineError(Exception):
    def __init__(self, message: str, exit_code: int = 1):
        self.exit_code = exit_code
        super().__init__(message)


@dataclass
class PipelineConfig:
    vehicles_csv: str
    poi_csv: str | None = None
    grid_dir: str | None = None
    patterns_path: str | None = None
    thresholds_csv: str | None = None
    theta_m: float = DEFAULT_THETA_M
    window_s: int = 3600
    slide_s: int = 3600
    first_query: int | None = None
    mode: str = "batch"
    workers: int = 1
    delay: DelayConfig | None = None
    ice_predicate: str = DEFAULT_ICE_PREDICATE
    out_dir: str | None = None

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.window_s < self.slide_s:
            raise ValueError("window must be at least the slide step")


@dataclass
class BenchReport:
    queries: int = 0
    per_query_ms: list[float] = field(default_factory=list)
    avg_recognition_ms: float = 0.0
    throughput_eps: float = 0.0
    stage_throughput_eps: dict[str, float] = field(default_factory=dict)
    cache_hit_ratio: float | None = None
    rejected_records: int = 0
    dropped_events: int = 0
    events: int = 0
    join_stats: dict[str, float] = field(default_factory=dict)
    cer_wall_clock_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def load_patterns(path: str | None) -> PatternSet:
    if path is None:
        return builtin_fleet_patterns()
    return parse_pattern_file(Path(path).read_text())


def load_thresholds(path: str | None) -> ThresholdRegistry:
    if path is None:
        return ThresholdRegistry(dict(DEFAULT_THRESHOLDS))
    return ThresholdRegistry.from_csv(Path(path).read_text())


def partition_by_vehicle(items, workers: int, key=lambda e: e.vehicle) -> list[list]:
    """Deterministic stable-hash assignment of vehicles to workers."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    parts: list[list] = [[] for _ in range(workers)]
    for item in items:
        parts[zlib.crc32(key(item).encode()) % workers].append(item)
    return parts


def query_grid(events: list[EventInstance], slide_s: int,
               first_query: int | None = None) -> tuple[int, int]:
    """(first, last) query times covering the stream on the slide grid."""
    if not events:
        raise PipelineError("no events to recognize", exit_code=4)
    min_occ = min(e.occurrence for e in events)
    max_arr = max(e.arrival for e in events)
    q0 = first_query if first_query is not None else (min_occ // slide_s) * slide_s + slide_s
    q_end = q0 + max(0, -(-(max_arr - q0) // slide_s)) * slide_s
    return q0, q_end


def _recognize_partition(args):
    patterns, thresholds, window, mode, events, q_end = args
    engine = RecognitionEngine(patterns, thresholds, window, mode=mode)
    rows = []
    metrics = []
    for result in engine.run(events, until=q_end):
        for fv in sorted(result.intervals, key=lambda f: (f.fluent, f.vehicle)):
            for iv in result.intervals[fv]:
                rows.append((result.query_time, fv.fluent, fv.vehicle,
                             iv.start, format_interval_end(iv)))
        metrics.append((result.query_time, result.recognition_ms,
                        result.events_consumed, result.dropped))
    return rows, metrics


def run_recognizers(
    events: list[EventInstance],
    patterns: PatternSet,
    thresholds: ThresholdRegistry,
    window_s: int,
    slide_s: int,
    mode: str = "batch",
    workers: int = 1,
    first_query: int | None = None,
):
    """Run W engines over vehicle partitions; merged rows plus metrics.

    Returns (interval_rows, per_query_metrics, wall_clock_s) where each
    interval row is (query_time, fluent, vehicle, start, end_str) and each
    metrics row is (query_time, recognition_ms, events_in_window, dropped);
    under W > 1 the per-query recognition time is the slowest worker's.
    """
    q0, q_end = query_grid(events, slide_s, first_query)
    window = WindowConfig(window_s, slide_s, q0)
    parts = partition_by_vehicle(events, workers)
    t0 = time.perf_counter()
    if workers == 1:
        outputs = [_recognize_partition((patterns, thresholds, window, mode, events, q_end))]
    else:
        jobs = [(patterns, thresholds, window, mode, part, q_end) for part in parts]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_recognize_partition, jobs))
    wall = time.perf_counter() - t0

    rows = sorted(row for out, _ in outputs for row in out)
    merged: dict[int, list[float | int]] = {}
    for _, metrics in outputs:
        for q, ms, n, dropped in metrics:
            agg = merged.setdefault(q, [0.0, 0, 0])
            agg[0] = max(agg[0], ms)
            agg[1] += n
            agg[2] += dropped
    per_query = [(q, *merged[q]) for q in sorted(merged)]
    return rows, per_query, wall


def validate_frame(df: pd.DataFrame) -> tuple[pd.DataFrame, int]:
    kept, rejected = [], 0
    for row in df.to_dict("records"):
        rec = validate_record(row)
        if isinstance(rec, str):
            rejected += 1
            continue
        row = dict(row)
        row["timestamp"] = rec.t
        kept.append(row)
    return pd.DataFrame(kept), rejected


def prepare_events(cfg: PipelineConfig) -> tuple[list[EventInstance], BenchReport]:
    """Validation, enrichment and event derivation (everything before CER)."""
    report = BenchReport()
    try:
        df = pd.read_csv(cfg.vehicles_csv)
    except OSError as e:
        raise PipelineError(f"cannot read {cfg.vehicles_csv}: {e}", exit_code=2)

    n_in = len(df)
    if cfg.grid_dir is not None:
        t0 = time.perf_counter()
        weather = WeatherEnricher(grid_dir=cfg.grid_dir).fit()
        df = weather.transform(df)
        dt = time.perf_counter() - t0
        report.stage_throughput_eps["weather"] = n_in / dt if dt else 0.0
        report.rejected_records = weather.rejected_
        report.cache_hit_ratio = weather.store_.hit_ratio
    else:
        df, report.rejected_records = validate_frame(df)

    if len(df) == 0:
        raise PipelineError("zero accepted records", exit_code=4)

    if cfg.poi_csv is not None:
        t0 = time.perf_counter()
        pois = load_pois(cfg.poi_csv)
        enricher = PoiEnricher(theta_m=cfg.theta_m).fit(pois)
        df = enricher.transform(df)
        dt = time.perf_counter() - t0
        report.stage_throughput_eps["poi"] = len(df) / dt if dt else 0.0
        report.join_stats = {
            "n_pois": enricher.index_.n_pois,
            "n_records": len(df),
            "avg_pois_per_cell": enricher.index_.avg_pois_per_cell,
            "replication_factor": enricher.index_.replication_factor,
        }

    events = frame_to_events(df, IcePredicate(cfg.ice_predicate))
    if cfg.delay is not None:
        events = inject_delays(events, cfg.delay)
    report.events = len(events)
    return events, report


def run_pipeline(cfg: PipelineConfig) -> BenchReport:
    try:
        patterns = load_patterns(cfg.patterns_path)
    except OSError as e:
        raise PipelineError(f"cannot read pattern file: {e}", exit_code=2)
    thresholds = load_thresholds(cfg.thresholds_csv)
    events, report = prepare_events(cfg)

    rows, per_query, wall = run_recognizers(
        events, patterns, thresholds, cfg.window_s, cfg.slide_s,
        mode=cfg.mode, workers=cfg.workers, first_query=cfg.first_query,
    )
    report.queries = len(per_query)
    report.per_query_ms = [ms for _, ms, _, _ in per_query]
    report.avg_recognition_ms = (
        sum(report.per_query_ms) / len(report.per_query_ms) if per_query else 0.0
    )
    report.dropped_events = per_query[-1][3] if per_query else 0
    report.cer_wall_clock_s = wall
    report.throughput_eps = report.events / wall if wall else 0.0
    report.stage_throughput_eps["cer"] = report.throughput_eps

    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_interval_rows(rows, out / "intervals.csv")
        with open(out / "metrics.csv", "w") as f:
            f.write("query_time,recognition_ms,events_in_window,dropped\n")
            for q, ms, n, dropped in per_query:
                f.write(f"{q},{ms:.3f},{n},{dropped}\n")
        (out / "report.json").write_text(report.to_json())
    return report


def write_interval_rows(rows, path) -> None:
    with open(path, "w") as f:
        f.write("fluent,vehicle,start_exclusive,end_inclusive,query_time\n")
        for q, fluent, vehicle, start, end in rows:
            f.write(f"{fluent},{vehicle},{start},{end},{q}\n")


def sweep_bench(
    cfg: PipelineConfig,
    windows_s: list[int],
    workers_list: list[int],
    delay_fractions: list[float],
    slide_s: int = 3600,
    seed: int = 0,
) -> list[dict]:
    """One pipeline run per parameter combination.

    No-delay runs use slide = window (batch mode only); delay runs use the
    given slide and compare batch against incremental.  Failures are
    recorded per row and the sweep continues.
    """
    base_cfg = PipelineConfig(**{**asdict_shallow(cfg), "delay": None})
    events_plain, _ = prepare_events(base_cfg)
    patterns = load_patterns(cfg.patterns_path)
    thresholds = load_thresholds(cfg.thresholds_csv)

    combos = []
    for window in windows_s:
        for workers in workers_list:
            if not delay_fractions:
                combos.append((window, window, workers, "batch", 0.0))
            else:
                for frac in delay_fractions:
                    for mode in ("batch", "incremental"):
                        combos.append((window, slide_s, workers, mode, frac))

    delayed_cache: dict[float, list[EventInstance]] = {}
    rows = []
    for window, slide, workers, mode, frac in combos:
        row = {
            "window_s": window, "slide_s": slide, "workers": workers,
            "mode": mode, "delay_pct": round(frac * 100),
            "avg_recognition_ms": None, "throughput_eps": None, "error": "",
        }
        try:
            if frac > 0:
                if frac not in delayed_cache:
                    delayed_cache[frac] = inject_delays(
                        events_plain, DelayConfig(frac, seed=seed)
                    )
                events = delayed_cache[frac]
            else:
                events = events_plain
            _, per_query, wall = run_recognizers(
                events, patterns, thresholds, window, slide,
                mode=mode, workers=workers, first_query=cfg.first_query,
            )
            ms = [m for _, m, _, _ in per_query]
            row["avg_recognition_ms"] = sum(ms) / len(ms) if ms else 0.0
            row["throughput_eps"] = len(events) / wall if wall else 0.0
        except Exception as e:  # keep sweeping
            row["error"] = str(e)
        rows.append(row)
    return rows


def asdict_shallow(cfg: PipelineConfig) -> dict:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


def write_sweep_csv(rows: list[dict], path) -> None:
    cols = ["window_s", "slide_s", "workers", "mode", "delay_pct",
            "avg_recognition_ms", "throughput_eps", "error"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join("" if row[c] is None else str(row[c]) for c in cols) + "\n")


class EventRecognizer(BaseEstimator, TransformerMixin):
    """Estimator facade over the recognition engines.

    fit() compiles patterns and thresholds; transform() takes an event
    frame (event_type, vehicle, occurrence_ts, arrival_ts, arg1, arg2) and
    returns the recognized interval frame.  Per-query metrics land in
    ``metrics_``.
    """

    def __init__(self, window_s=3600, slide_s=3600, mode="batch",
                 patterns_text=None, thresholds=None, workers=1, first_query=None):
        self.window_s = window_s
        self.slide_s = slide_s
        self.mode = mode
        self.patterns_text = patterns_text
        self.thresholds = thresholds
        self.workers = workers
        self.first_query = first_query

    def fit(self, X=None, y=None):
        self.patterns_ = (
            builtin_fleet_patterns()
            if self.patterns_text is None
            else parse_pattern_file(self.patterns_text)
        )
        if self.thresholds is None:
            self.thresholds_ = ThresholdRegistry(dict(DEFAULT_THRESHOLDS))
        elif isinstance(self.thresholds, ThresholdRegistry):
            self.thresholds_ = self.thresholds
        else:
            reg = ThresholdRegistry()
            for (vehicle, param), value in self.thresholds.items():
                reg.add(vehicle, param, value)
            self.thresholds_ = reg
        return self

    def transform(self, X) -> pd.DataFrame:
        if isinstance(X, pd.DataFrame):
            events = [
                EventInstance(
                    str(r.event_type), str(r.vehicle), int(r.occurrence_ts),
                    int(r.arrival_ts),
                    tuple(float(a) for a in (r.arg1, r.arg2)
                          if a == a and str(a) != ""),
                )
                for r in X.itertuples(index=False)
            ]
        else:
            events = list(X)
        rows, per_query, _ = run_recognizers(
            events, self.patterns_, self.thresholds_, self.window_s,
            self.slide_s, mode=self.mode, workers=self.workers,
            first_query=self.first_query,
        )
        self.metrics_ = pd.DataFrame(
            per_query,
            columns=["query_time", "recognition_ms", "events_in_window", "dropped"],
        )
        return pd.DataFrame(
            rows,
            columns=["query_time", "fluent", "vehicle", "start_exclusive",
                     "end_inclusive"],
        )
