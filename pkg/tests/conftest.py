from pathlib import Path

import pytest

from fleetcer.patterns import ThresholdRegistry, builtin_fleet_patterns

SAMPLE_DIR = Path(__file__).resolve().parent.parent / "sample_data"
DATA_DIR = Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def sample_dir() -> Path:
    return SAMPLE_DIR


@pytest.fixture(scope="session")
def golden_intervals() -> str:
    return (DATA_DIR / "golden_intervals.csv").read_text()


@pytest.fixture(scope="session")
def patterns():
    return builtin_fleet_patterns()


@pytest.fixture()
def thresholds():
    return ThresholdRegistry({("*", "speed"): 90.0, ("*", "fuel"): 60.0})
