from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensemble_forge.marketdata import (
    TOTAL,
    PriceTableError,
    compute_returns,
    demean,
    load_price_table,
    parse_price_csv,
    read_panel_tsv,
    write_panel_tsv,
    write_price_csv,
)

from conftest import make_price_csv


class TestParsing:
    def test_small_csv(self, small_price_csv):
        table = parse_price_csv(small_price_csv)
        assert table.n_assets == 3
        assert table.n_days == 5
        assert table.tickers == ("AAA", "BBB", "CCC")
        assert table.prices[0, 0] == 100.0
        assert table.prices[2, 4] == 20.6

    def test_zero_price_rejected(self, small_price_csv):
        bad = small_price_csv.replace("99.5,50.5", "0.0,50.5")
        with pytest.raises(PriceTableError, match="non-positive price"):
            parse_price_csv(bad)
        # the error names the offending row and column
        with pytest.raises(PriceTableError, match="row 4.*AAA"):
            parse_price_csv(bad)

    def test_negative_price_rejected(self, small_price_csv):
        with pytest.raises(PriceTableError, match="non-positive"):
            parse_price_csv(small_price_csv.replace("20.4", "-20.4"))

    def test_malformed_cell(self, small_price_csv):
        with pytest.raises(PriceTableError, match="row 3.*BBB.*malformed"):
            parse_price_csv(small_price_csv.replace("2001-01-02,101.0,49.5", "2001-01-02,101.0,oops"))

    def test_duplicate_timestamp(self, small_price_csv):
        with pytest.raises(PriceTableError, match="duplicate timestamp"):
            parse_price_csv(small_price_csv.replace("2001-01-04", "2001-01-03"))

    def test_out_of_order_timestamps(self, small_price_csv):
        with pytest.raises(PriceTableError, match="strictly increasing"):
            parse_price_csv(small_price_csv.replace("2001-01-04", "2000-12-31"))

    def test_missing_cell(self, small_price_csv):
        with pytest.raises(PriceTableError, match="expected 4 cells"):
            parse_price_csv(small_price_csv.replace("2001-01-05,102.0,50.0,20.6", "2001-01-05,102.0,50.0"))

    def test_single_ticker_rejected(self):
        with pytest.raises(PriceTableError):
            parse_price_csv("date,AAA\n2001-01-01,1.0\n2001-01-02,2.0\n")

    def test_crlf_accepted(self, small_price_csv):
        table = parse_price_csv(small_price_csv.replace("\n", "\r\n"))
        assert table.n_days == 5

    def test_load_from_disk(self, tmp_path, small_price_csv):
        path = tmp_path / "prices.csv"
        path.write_text(small_price_csv, encoding="utf-8")
        table = load_price_table(path)
        assert table.n_assets == 3

    def test_full_scale_panel(self):
        # 306 tickers over ~21 years of trading days
        rng = np.random.default_rng(0)
        k, t = 306, 5290
        prices = np.exp(rng.normal(0.0, 0.01, size=(k, t)).cumsum(axis=1)) * 50.0
        table = parse_price_csv(make_price_csv(prices))
        assert table.n_assets == 306
        assert table.n_days == 5290

    def test_roundtrip_exact(self, tmp_path, small_price_csv):
        table = parse_price_csv(small_price_csv)
        path = tmp_path / "out.csv"
        write_price_csv(table, path)
        again = load_price_table(path)
        assert again.tickers == table.tickers
        assert again.timestamps == table.timestamps
        assert np.array_equal(again.prices, table.prices)


class TestReturns:
    def test_single_step(self):
        table = parse_price_csv("date,A,B\n2001-01-01,100.0,10.0\n2001-01-02,101.0,10.0\n")
        panel = compute_returns(table, 1)
        assert panel.values[0, 0] == pytest.approx(0.01, abs=1e-15)
        assert panel.values[1, 0] == 0.0
        assert panel.horizon == 1
        assert not panel.demeaned

    def test_constant_prices_zero_returns(self):
        prices = np.full((2, 50), 37.5)
        panel = compute_returns(parse_price_csv(make_price_csv(prices)), 5)
        assert np.all(panel.values == 0.0)

    def test_t_tot_shrinks_by_dt(self):
        rng = np.random.default_rng(1)
        prices = np.exp(rng.normal(0, 0.01, size=(3, 400)).cumsum(axis=1))
        table = parse_price_csv(make_price_csv(prices))
        panel = compute_returns(table, 20)
        assert panel.n_obs == table.n_days - 20

    def test_dt_out_of_range(self, small_price_csv):
        table = parse_price_csv(small_price_csv)
        with pytest.raises(ValueError, match="out of range"):
            compute_returns(table, 0)
        with pytest.raises(ValueError, match="out of range"):
            compute_returns(table, 5)

    def test_stride_subsamples_start_times(self):
        rng = np.random.default_rng(5)
        prices = np.exp(rng.normal(0, 0.01, size=(2, 31)).cumsum(axis=1))
        table = parse_price_csv(make_price_csv(prices))
        overlapping = compute_returns(table, 5, stride=1)
        non_overlapping = compute_returns(table, 5, stride=5)
        assert overlapping.n_obs == 26
        assert non_overlapping.n_obs == 6
        assert np.allclose(non_overlapping.values, overlapping.values[:, ::5])

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.5, max_value=500.0), min_size=4, max_size=24),
        st.floats(min_value=1e-6, max_value=1e6),
    )
    def test_scale_invariance(self, row, lam):
        prices = np.vstack([np.asarray(row), np.linspace(1.0, 2.0, len(row))])
        table = parse_price_csv(make_price_csv(prices))
        base = compute_returns(table, 1).values[0]
        scaled_prices = prices.copy()
        scaled_prices[0] *= lam
        scaled = compute_returns(parse_price_csv(make_price_csv(scaled_prices)), 1).values[0]
        assert np.allclose(base, scaled, rtol=1e-13, atol=1e-14)


class TestDemean:
    def test_total_symmetric_row(self):
        panel = _panel(np.array([[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]))
        out = demean(panel)
        assert np.allclose(out.values[0], [-1.0, 0.0, 1.0])
        assert out.demeaned and out.demean_window == TOTAL

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(min_value=-10, max_value=10), min_size=3, max_size=40))
    def test_total_mean_is_zero(self, row):
        panel = _panel(np.vstack([np.asarray(row), np.zeros(len(row))]))
        out = demean(panel)
        assert abs(out.values[0].mean()) < 1e-12

    def test_sliding_matches_direct_loop(self):
        rng = np.random.default_rng(7)
        values = rng.standard_normal((2, 60))
        panel = _panel(values)
        t = 5
        out = demean(panel, t)
        assert out.n_obs == 60 - t + 1
        for k in range(2):
            for j, pos in enumerate(range(t - 1, 60)):
                trailing = values[k, pos - t + 1 : pos + 1].mean()
                assert out.values[k, j] == pytest.approx(values[k, pos] - trailing, abs=1e-14)

    def test_window_too_long(self):
        panel = _panel(np.zeros((2, 10)))
        with pytest.raises(ValueError, match="exceeds panel length"):
            demean(panel, 11)

    def test_returns_then_demean_total(self, small_price_csv):
        table = parse_price_csv(small_price_csv)
        out = demean(compute_returns(table, 1))
        assert np.all(np.abs(out.values.mean(axis=1)) < 1e-12)


class TestPanelSerialization:
    def test_tsv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        panel = _panel(rng.standard_normal((3, 12)))
        path = tmp_path / "panel.tsv"
        write_panel_tsv(panel, path)
        again = read_panel_tsv(path)
        assert again.tickers == panel.tickers
        assert again.timestamps == panel.timestamps
        assert np.array_equal(again.values, panel.values)


def _panel(values: np.ndarray):
    from ensemble_forge.marketdata import ReturnPanel

    k, t = values.shape
    return ReturnPanel(
        tickers=tuple(f"T{i}" for i in range(k)),
        timestamps=tuple(f"2001-01-{d + 1:02d}" if d < 28 else f"2001-02-{d - 27:02d}" for d in range(t)),
        values=values,
        horizon=1,
    )
