"""Indicator correctness against per-index brute force, and feature assembly."""
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surplusminer.errors import DataInsufficientError
from surplusminer.indicators import (
    BASE_WINDOW,
    D_WINDOW,
    FEATURE_NAMES,
    build_features,
    momentum,
    rsi,
    sma,
    stoch_d,
    stoch_k,
    wma,
)

from conftest import make_series
from oracles import oracle_d, oracle_k, oracle_momentum, oracle_rsi, oracle_sma, oracle_wma

prices_strategy = st.lists(
    st.floats(min_value=0.01, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=20,
    max_size=60,
)


def random_prices(n, seed=0):
    rng = np.random.default_rng(seed)
    return list(np.exp(rng.normal(np.log(30000.0), 0.3, size=n)))


class TestAgainstBruteForce:
    """Every emitted element must equal the defining formula exactly (==)."""

    def test_all_indicators_exact(self):
        ps = random_prices(300, seed=42)
        n = BASE_WINDOW
        assert sma(ps, n) == [oracle_sma(ps, t, n) for t in range(n - 1, len(ps))]
        assert wma(ps, n) == [oracle_wma(ps, t, n) for t in range(n - 1, len(ps))]
        assert momentum(ps, 1) == [oracle_momentum(ps, t, 1) for t in range(1, len(ps))]
        assert stoch_k(ps, n) == [oracle_k(ps, t, n) for t in range(n - 1, len(ps))]
        assert rsi(ps, n) == [oracle_rsi(ps, t, n) for t in range(n, len(ps))]

    def test_d_exact(self):
        ps = random_prices(100, seed=7)
        n, m = BASE_WINDOW, D_WINDOW
        k_vals = stoch_k(ps, n)
        got = stoch_d(k_vals, m)
        want = []
        for t in range(n - 1 + m - 1, len(ps)):
            acc = 0.0
            for j in range(t - m + 1, t + 1):
                acc += oracle_k(ps, j, n)
            want.append(acc / m)
        assert got == want

    @pytest.mark.parametrize("window", [2, 5, 14])
    def test_other_windows_exact(self, window):
        ps = random_prices(80, seed=window)
        assert sma(ps, window) == [
            oracle_sma(ps, t, window) for t in range(window - 1, len(ps))
        ]
        assert rsi(ps, window) == [
            oracle_rsi(ps, t, window) for t in range(window, len(ps))
        ]


class TestKnownValues:
    def test_wma_tiny(self):
        assert wma([1.0, 2.0, 3.0], 3) == [14.0 / 6.0]

    def test_sma_tiny(self):
        assert sma([2.0, 4.0, 6.0, 8.0], 2) == [3.0, 5.0, 7.0]

    def test_momentum_tiny(self):
        assert momentum([5.0, 7.0, 4.0], 1) == [2.0, -3.0]

    def test_constant_series_neutral(self):
        ps = [100.0] * 30
        assert all(v == 50.0 for v in stoch_k(ps, 14))
        assert all(v == 50.0 for v in rsi(ps, 14))
        assert all(v == 100.0 for v in sma(ps, 14))

    def test_rsi_monotone_series(self):
        rising = [float(i) for i in range(1, 30)]
        assert all(v == 100.0 for v in rsi(rising, 14))
        falling = [float(i) for i in range(30, 1, -1)]
        assert all(v == 0.0 for v in rsi(falling, 14))

    def test_k_at_extremes(self):
        ps = [1.0, 2.0, 3.0, 4.0]
        assert stoch_k(ps, 3)[-1] == 100.0
        assert stoch_k(list(reversed(ps)), 3)[-1] == 0.0


class TestBounds:
    @given(prices_strategy)
    @settings(max_examples=60, deadline=None)
    def test_oscillators_in_0_100(self, ps):
        for v in stoch_k(ps, 14) + rsi(ps, 14) + stoch_d(stoch_k(ps, 14), 3):
            assert 0.0 <= v <= 100.0

    @given(prices_strategy)
    @settings(max_examples=60, deadline=None)
    def test_sma_within_window_range(self, ps):
        """Mean stays in the window's range, up to summation rounding."""
        vals = sma(ps, 14)
        for k, v in enumerate(vals):
            window = ps[k : k + 14]
            slack = 1e-13 * max(abs(min(window)), abs(max(window)))
            assert min(window) - slack <= v <= max(window) + slack


class TestFeatureAssembly:
    def test_warm_up_indexing(self):
        """A 20-day series yields exactly 3 rows, on days 17..19 (1-based)."""
        start = date(2023, 1, 1)
        series = make_series(random_prices(20, seed=3), start=start)
        matrix = build_features(series)
        assert len(matrix) == 3
        assert matrix.rows[0].day == start + timedelta(days=16)
        assert matrix.rows[-1].day == start + timedelta(days=18)

    def test_minimum_length(self):
        n_min = BASE_WINDOW + D_WINDOW + 1  # first row index + target day
        series = make_series(random_prices(n_min, seed=4))
        assert len(build_features(series)) == 1
        short = make_series(random_prices(n_min - 1, seed=4))
        with pytest.raises(DataInsufficientError):
            build_features(short)

    def test_row_values_match_indicators(self):
        ps = random_prices(40, seed=5)
        series = make_series(ps)
        matrix = build_features(series)
        t0 = BASE_WINDOW + D_WINDOW - 1
        for offset, row in enumerate(matrix.rows):
            t = t0 + offset
            assert row.sma14 == oracle_sma(ps, t, BASE_WINDOW)
            assert row.wma14 == oracle_wma(ps, t, BASE_WINDOW)
            assert row.momentum == oracle_momentum(ps, t, 1)
            assert row.k_pct == oracle_k(ps, t, BASE_WINDOW)
            assert row.d_pct == oracle_d(ps, t, BASE_WINDOW, D_WINDOW)
            assert row.rsi == oracle_rsi(ps, t, BASE_WINDOW)
            assert row.price == ps[t]
            assert row.target_price == ps[t + 1]

    def test_last_day_has_no_row(self):
        ps = random_prices(25, seed=6)
        series = make_series(ps)
        matrix = build_features(series)
        assert matrix.rows[-1].day == series.end - timedelta(days=1)

    def test_arrays_shapes(self):
        series = make_series(random_prices(30, seed=8))
        matrix = build_features(series)
        assert matrix.feature_array().shape == (len(matrix), len(FEATURE_NAMES))
        assert matrix.input_array().shape == (len(matrix), len(FEATURE_NAMES) + 1)
        assert matrix.target_array().shape == (len(matrix),)
        assert list(matrix.input_array()[:, -1]) == [r.price for r in matrix.rows]

    def test_slice_dates(self):
        series = make_series(random_prices(30, seed=9), start=date(2023, 1, 1))
        matrix = build_features(series)
        part = matrix.slice_dates(date(2023, 1, 20), date(2023, 1, 22))
        assert [r.day.day for r in part.rows] == [20, 21, 22]
