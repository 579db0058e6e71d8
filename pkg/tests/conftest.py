import sys
from datetime import date, timedelta
from pathlib import Path

import pytest

from surplusminer.ingest import MarketRecord, MarketSeries

TESTS_DIR = Path(__file__).parent
sys.path.insert(0, str(TESTS_DIR))  # makes `oracles` importable from any cwd

DATA_DIR = TESTS_DIR / "data"
FIXTURE_CONFIG = DATA_DIR / "fixture_config.json"


def make_series(prices, start=date(2022, 1, 1), hashrate=3.0e8) -> MarketSeries:
    """Daily market series from a plain price list, constant network hash rate."""
    records = tuple(
        MarketRecord(start + timedelta(days=i), float(p), hashrate)
        for i, p in enumerate(prices)
    )
    return MarketSeries(records)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def fixture_config() -> Path:
    return FIXTURE_CONFIG
