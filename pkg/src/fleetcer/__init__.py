"""Online fleet monitoring: stream enrichment and composite event recognition."""

from .bench import (
    BenchReport,
    EventRecognizer,
    PipelineConfig,
    PipelineError,
    partition_by_vehicle,
    run_pipeline,
    sweep_bench,
)
from .core import (
    OPEN,
    EventInstance,
    FluentValue,
    Interval,
    boundary_events,
    clip_to_window,
    holds_at,
    make_intervals,
)
from .patterns import (
    PatternError,
    PatternSet,
    Rule,
    ThresholdRegistry,
    builtin_fleet_patterns,
    dependency_order,
    parse_pattern_file,
    serialize_patterns,
)
from .poi import GridIndex, Poi, PoiEnricher, distance_join, haversine_m
from .recognizer import RecognitionEngine, RecognitionResult, WindowConfig
from .streamio import DelayConfig, inject_delays, record_to_events, replay
from .weather import IcePredicate, WeatherEnricher, WeatherStore, validate_record

__version__ = "0.1.0"

__all__ = [
    "BenchReport", "DelayConfig", "EventInstance", "EventRecognizer",
    "FluentValue", "GridIndex", "IcePredicate", "Interval", "OPEN",
    "PatternError", "PatternSet", "PipelineConfig", "PipelineError", "Poi",
    "PoiEnricher", "RecognitionEngine", "RecognitionResult", "Rule",
    "ThresholdRegistry", "WeatherEnricher", "WeatherStore", "WindowConfig",
    "boundary_events", "builtin_fleet_patterns", "clip_to_window",
    "dependency_order", "distance_join", "haversine_m", "holds_at",
    "inject_delays", "make_intervals", "parse_pattern_file",
    "partition_by_vehicle", "record_to_events", "replay", "run_pipeline",
    "serialize_patterns", "sweep_bench", "validate_record",
]
