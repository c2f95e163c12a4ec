"""Command-line interface for the fleet monitoring pipeline.

Every stage is exposed as its own subcommand so intermediate CSVs can be
inspected; `run` chains them all.  A `--config` file of key=value lines
overrides the corresponding flags; FLEETCER_SEED seeds delay injection.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import pandas as pd

from .bench import (
    PipelineConfig,
    PipelineError,
    load_patterns,
    load_thresholds,
    run_pipeline,
    run_recognizers,
    sweep_bench,
    write_interval_rows,
    write_sweep_csv,
)
from .patterns import PatternError
from .poi import DEFAULT_THETA_M, PoiEnricher, load_pois
from .streamio import (
    DEFAULT_UNIT_SCALE_S,
    DelayConfig,
    frame_to_events,
    inject_delays,
    read_events_csv,
    write_events_csv,
)
from .weather import DEFAULT_ICE_PREDICATE, IcePredicate, WeatherEnricher


def _parse_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.ClickException(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _coerce(value: str, like):
    if value.lower() in ("none", ""):
        return None
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes")
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def apply_config(params: dict, config_path: str | None) -> dict:
    """Config file entries take precedence over command-line flags."""
    if not config_path:
        return params
    overrides = _parse_config_file(config_path)
    merged = dict(params)
    for key, value in overrides.items():
        if key not in merged:
            raise click.ClickException(f"unknown config key {key!r}")
        merged[key] = _coerce(value, merged[key])
    return merged


@click.group()
def main():
    """Fleet monitoring: stream enrichment and composite event recognition."""


@main.command("enrich-weather")
@click.argument("input_csv", type=click.Path(exists=True))
@click.argument("output_csv", type=click.Path())
@click.option("--grid-dir", required=True, type=click.Path(exists=True),
              help="Directory of .grid forecast files.")
@click.option("--cache-size", default=8, show_default=True)
def enrich_weather_cmd(input_csv, output_csv, grid_dir, cache_size):
    """Validate records and attach weather attributes."""
    enricher = WeatherEnricher(grid_dir=grid_dir, cache_size=cache_size).fit()
    out = enricher.transform(pd.read_csv(input_csv))
    out.to_csv(output_csv, index=False)
    click.echo(
        f"wrote {len(out)} records ({enricher.rejected_} rejected, "
        f"cache hit ratio {enricher.store_.hit_ratio:.2%})"
    )


@main.command("enrich-poi")
@click.argument("input_csv", type=click.Path(exists=True))
@click.argument("output_csv", type=click.Path())
@click.option("--pois", required=True, type=click.Path(exists=True),
              help="POI CSV with columns lon,lat,name,type.")
@click.option("--theta-meters", default=DEFAULT_THETA_M, show_default=True)
def enrich_poi_cmd(input_csv, output_csv, pois, theta_meters):
    """Join records with POIs within the distance threshold."""
    enricher = PoiEnricher(theta_m=theta_meters).fit(load_pois(pois))
    out = enricher.transform(pd.read_csv(input_csv))
    out.to_csv(output_csv, index=False)
    click.echo(
        f"wrote {len(out)} records "
        f"(replication factor {enricher.index_.replication_factor:.2f})"
    )


@main.command("derive-events")
@click.argument("input_csv", type=click.Path(exists=True))
@click.argument("output_csv", type=click.Path())
@click.option("--ice-predicate", default=DEFAULT_ICE_PREDICATE, show_default=True)
def derive_events_cmd(input_csv, output_csv, ice_predicate):
    """Turn enriched records into the input event stream."""
    events = frame_to_events(pd.read_csv(input_csv), IcePredicate(ice_predicate))
    write_events_csv(events, output_csv)
    click.echo(f"wrote {len(events)} events")


@main.command("inject-delays")
@click.argument("input_csv", type=click.Path(exists=True))
@click.argument("output_csv", type=click.Path())
@click.option("--fraction", required=True, type=float)
@click.option("--seed", default=0, envvar="FLEETCER_SEED", show_default=True)
@click.option("--unit-scale-secs", default=DEFAULT_UNIT_SCALE_S, show_default=True)
def inject_delays_cmd(input_csv, output_csv, fraction, seed, unit_scale_secs):
    """Delay a seeded uniform selection of events (Gamma magnitudes)."""
    events = read_events_csv(input_csv)
    delayed = inject_delays(
        events, DelayConfig(fraction, seed=seed, unit_scale_s=unit_scale_secs)
    )
    write_events_csv(delayed, output_csv)
    click.echo(f"wrote {len(delayed)} events")


@main.command("recognize")
@click.argument("events_csv", type=click.Path(exists=True))
@click.argument("out_dir", type=click.Path())
@click.option("--patterns", type=click.Path(exists=True), help="Pattern file (default: built-ins).")
@click.option("--thresholds", type=click.Path(exists=True), help="Threshold CSV.")
@click.option("--window-secs", default=3600, show_default=True)
@click.option("--slide-secs", default=3600, show_default=True)
@click.option("--mode", type=click.Choice(["batch", "incremental"]), default="batch")
@click.option("--workers", default=1, show_default=True)
@click.option("--first-query", type=int, default=None)
def recognize_cmd(events_csv, out_dir, patterns, thresholds, window_secs,
                  slide_secs, mode, workers, first_query):
    """Run composite event recognition over an event CSV."""
    events = read_events_csv(events_csv)
    try:
        rows, per_query, wall = run_recognizers(
            events, load_patterns(patterns), load_thresholds(thresholds),
            window_secs, slide_secs, mode=mode, workers=workers,
            first_query=first_query,
        )
    except PatternError as e:
        raise SystemExit(_fail(str(e), 3))
    except PipelineError as e:
        raise SystemExit(_fail(str(e), e.exit_code))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_interval_rows(rows, out / "intervals.csv")
    with open(out / "metrics.csv", "w") as f:
        f.write("query_time,recognition_ms,events_in_window,dropped\n")
        for q, ms, n, dropped in per_query:
            f.write(f"{q},{ms:.3f},{n},{dropped}\n")
    click.echo(f"{len(per_query)} queries, {len(rows)} interval rows in {wall:.2f}s")


_PIPELINE_OPTIONS = [
    click.option("--pois", "poi_csv", type=click.Path(), default=None),
    click.option("--grid-dir", type=click.Path(), default=None),
    click.option("--patterns", "patterns_path", type=click.Path(), default=None),
    click.option("--thresholds", "thresholds_csv", type=click.Path(), default=None),
    click.option("--theta-meters", "theta_m", default=DEFAULT_THETA_M, show_default=True),
    click.option("--ice-predicate", default=DEFAULT_ICE_PREDICATE, show_default=True),
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="key=value file; entries override flags."),
]


def _pipeline_options(cmd):
    for opt in reversed(_PIPELINE_OPTIONS):
        cmd = opt(cmd)
    return cmd


def _fail(message: str, code: int) -> int:
    click.echo(f"error: {message}", err=True)
    return code


@main.command("run")
@click.argument("vehicles_csv", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--window-secs", "window_s", default=3600, show_default=True)
@click.option("--slide-secs", "slide_s", default=3600, show_default=True)
@click.option("--mode", type=click.Choice(["batch", "incremental"]), default="batch")
@click.option("--workers", default=1, show_default=True)
@click.option("--first-query", "first_query", type=int, default=None)
@click.option("--delay-fraction", type=float, default=None)
@click.option("--seed", default=0, envvar="FLEETCER_SEED", show_default=True)
@_pipeline_options
def run_cmd(vehicles_csv, out_dir, window_s, slide_s, mode, workers, first_query,
            delay_fraction, seed, poi_csv, grid_dir, patterns_path, thresholds_csv,
            theta_m, ice_predicate, config_path):
    """Full pipeline: validate, enrich, derive events, recognize, report."""
    params = apply_config(
        dict(vehicles_csv=vehicles_csv, out_dir=out_dir, window_s=window_s,
             slide_s=slide_s, mode=mode, workers=workers, first_query=first_query,
             delay_fraction=delay_fraction, seed=seed, poi_csv=poi_csv,
             grid_dir=grid_dir, patterns_path=patterns_path,
             thresholds_csv=thresholds_csv, theta_m=theta_m,
             ice_predicate=ice_predicate),
        config_path,
    )
    fraction = params.pop("delay_fraction")
    seed = params.pop("seed")
    delay = DelayConfig(fraction, seed=seed) if fraction is not None else None
    cfg = PipelineConfig(delay=delay, **params)
    try:
        report = run_pipeline(cfg)
    except PatternError as e:
        raise SystemExit(_fail(str(e), 3))
    except PipelineError as e:
        raise SystemExit(_fail(str(e), e.exit_code))
    click.echo(report.to_json())


@main.command("sweep")
@click.argument("vehicles_csv", type=click.Path())
@click.option("--out", "out_csv", required=True, type=click.Path())
@click.option("--windows", default="3600,7200,14400,28800", show_default=True,
              help="Comma-separated window sizes in seconds.")
@click.option("--workers-list", default="1", show_default=True)
@click.option("--delays", default="", show_default=True,
              help="Comma-separated delay fractions, e.g. 0.05,0.1,0.2.")
@click.option("--slide-secs", "slide_s", default=3600, show_default=True)
@click.option("--seed", default=0, envvar="FLEETCER_SEED", show_default=True)
@_pipeline_options
def sweep_cmd(vehicles_csv, out_csv, windows, workers_list, delays, slide_s, seed,
              poi_csv, grid_dir, patterns_path, thresholds_csv, theta_m,
              ice_predicate, config_path):
    """Benchmark sweep over windows, worker counts and delay fractions."""
    params = apply_config(
        dict(vehicles_csv=vehicles_csv, out_csv=out_csv, windows=windows,
             workers_list=workers_list, delays=delays, slide_s=slide_s, seed=seed,
             poi_csv=poi_csv, grid_dir=grid_dir, patterns_path=patterns_path,
             thresholds_csv=thresholds_csv, theta_m=theta_m,
             ice_predicate=ice_predicate),
        config_path,
    )
    cfg = PipelineConfig(
        vehicles_csv=params["vehicles_csv"], poi_csv=params["poi_csv"],
        grid_dir=params["grid_dir"], patterns_path=params["patterns_path"],
        thresholds_csv=params["thresholds_csv"], theta_m=params["theta_m"],
        ice_predicate=params["ice_predicate"],
    )
    try:
        rows = sweep_bench(
            cfg,
            windows_s=_int_list(params["windows"]),
            workers_list=_int_list(params["workers_list"]),
            delay_fractions=_float_list(params["delays"]),
            slide_s=params["slide_s"],
            seed=params["seed"],
        )
    except PipelineError as e:
        raise SystemExit(_fail(str(e), e.exit_code))
    write_sweep_csv(rows, params["out_csv"])
    click.echo(f"wrote {len(rows)} sweep rows to {params['out_csv']}")


def _int_list(text) -> list[int]:
    text = str(text)
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text) -> list[float]:
    text = str(text)
    return [float(x) for x in text.split(",") if x.strip()]


if __name__ == "__main__":
    sys.exit(main())
