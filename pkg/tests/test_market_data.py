import datetime as dt
import logging

import numpy as np
import pytest

from vixfolio.market_data import (
    DataError,
    FormatSpec,
    PriceSeries,
    align_calendars,
    compute_returns,
    header_columns,
    load_prices,
    slice_window,
)
from conftest import make_matrix

D = dt.date


def write(tmp_path, text, name="prices.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


SPEC = FormatSpec({"BTC": "Bitcoin", "GOLD": "Gold"})


def test_load_three_rows(tmp_path):
    p = write(tmp_path, "Date,Bitcoin,Gold\n2021-01-04,100,50\n2021-01-05,110,51\n2021-01-06,99,52\n")
    series = load_prices(p, SPEC)
    assert [s.asset_id for s in series] == ["BTC", "GOLD"]
    assert all(len(s) == 3 for s in series)
    np.testing.assert_array_equal(series[0].prices, [100, 110, 99])


def test_zero_price_names_row(tmp_path):
    p = write(tmp_path, "Date,Bitcoin,Gold\n2021-01-04,100,50\n2021-01-05,0,51\n")
    with pytest.raises(DataError, match="row 3"):
        load_prices(p, SPEC)


def test_unparseable_price_and_date(tmp_path):
    p = write(tmp_path, "Date,Bitcoin,Gold\n2021-01-04,abc,50\n")
    with pytest.raises(DataError, match="row 2.*unparseable price"):
        load_prices(p, SPEC)
    p = write(tmp_path, "Date,Bitcoin,Gold\n04/01/2021,1,50\n")
    with pytest.raises(DataError, match="row 2.*unparseable date"):
        load_prices(p, SPEC)


def test_duplicate_date_and_bad_header(tmp_path):
    p = write(tmp_path, "Date,Bitcoin,Gold\n2021-01-04,1,50\n2021-01-04,2,50\n")
    with pytest.raises(DataError, match="row 3: duplicate date"):
        load_prices(p, SPEC)
    p = write(tmp_path, "Date,Bitcoin\n2021-01-04,1\n")
    with pytest.raises(DataError, match="missing columns"):
        load_prices(p, SPEC)


def test_out_of_order_is_sorted_with_warning(tmp_path, caplog):
    p = write(tmp_path, "Date,Bitcoin,Gold\n2021-01-06,3,52\n2021-01-04,1,50\n2021-01-05,2,51\n")
    with caplog.at_level(logging.WARNING, logger="vixfolio.market_data"):
        series = load_prices(p, SPEC)
    assert "re-sorted" in caplog.text
    assert series[0].dates == (D(2021, 1, 4), D(2021, 1, 5), D(2021, 1, 6))
    np.testing.assert_array_equal(series[0].prices, [1, 2, 3])


def test_blank_cell_is_missing_observation(tmp_path):
    p = write(tmp_path, "Date,Bitcoin,Gold\n2021-01-01,1,50\n2021-01-02,2,\n2021-01-03,3,51\n")
    btc, gold = load_prices(p, SPEC)
    assert len(btc) == 3 and len(gold) == 2


def test_custom_delimiter_and_format(tmp_path):
    p = write(tmp_path, "Day;Bitcoin;Gold\n04.01.2021;1;2\n")
    spec = FormatSpec({"BTC": "Bitcoin", "GOLD": "Gold"}, "Day", ";", "%d.%m.%Y")
    assert load_prices(p, spec)[0].dates == (D(2021, 1, 4),)


def test_header_columns(tmp_path):
    p = write(tmp_path, "A,Date,B\n1,2021-01-01,2\n")
    assert header_columns(p) == {"A": "A", "B": "B"}


def weekly(start, days, weekdays_only):
    dates = [start + dt.timedelta(days=k) for k in range(days)]
    if weekdays_only:
        dates = [d for d in dates if d.weekday() < 5]
    return dates


def test_align_drops_weekends():
    crypto_days = weekly(D(2021, 3, 1), 14, False)
    gold_days = weekly(D(2021, 3, 1), 14, True)
    crypto = PriceSeries("BTC", tuple(crypto_days), np.arange(1.0, 15.0))
    gold = PriceSeries("GOLD", tuple(gold_days), np.arange(1.0, 11.0))
    a, b = align_calendars([crypto, gold])
    assert a.dates == b.dates == tuple(gold_days)
    assert all(d.weekday() < 5 for d in a.dates)
    # prices follow their dates
    assert a.prices[5] == crypto.prices[crypto_days.index(a.dates[5])]


def test_align_identity_and_disjoint():
    s1 = PriceSeries("A", (D(2021, 1, 1), D(2021, 1, 2)), np.array([1.0, 2.0]))
    s2 = PriceSeries("B", (D(2021, 1, 1), D(2021, 1, 2)), np.array([3.0, 4.0]))
    out = align_calendars([s1, s2])
    assert out[0].dates == s1.dates and np.array_equal(out[1].prices, s2.prices)
    s3 = PriceSeries("C", (D(2022, 1, 1),), np.array([1.0]))
    with pytest.raises(DataError, match="no date in common"):
        align_calendars([s1, s3])


@pytest.mark.parametrize(
    "prices, expected",
    [((100, 110), [0.10]), ((100, 100, 100), [0.0, 0.0]), ((100, 50), [-0.5])],
)
def test_simple_returns(prices, expected):
    dates = tuple(D(2021, 1, k + 1) for k in range(len(prices)))
    m = compute_returns([PriceSeries("A", dates, np.array(prices, float))])
    np.testing.assert_allclose(m.returns[:, 0], expected, rtol=0, atol=1e-15)
    assert m.dates == dates[1:]


def test_compute_returns_shortable():
    dates = (D(2021, 1, 1), D(2021, 1, 2))
    s = [PriceSeries(a, dates, np.array([1.0, 2.0])) for a in ("A", "VIX")]
    assert compute_returns(s, "VIX").shortable_index == 1
    with pytest.raises(DataError, match="unknown shortable"):
        compute_returns(s, "XXX")


def test_price_series_validation():
    with pytest.raises(DataError):
        PriceSeries("A", (D(2021, 1, 2), D(2021, 1, 1)), np.array([1.0, 2.0]))
    with pytest.raises(DataError):
        PriceSeries("A", (D(2021, 1, 1),), np.array([-1.0]))


def test_slice_window():
    m = make_matrix(np.arange(10.0).reshape(5, 2) / 100)
    full = slice_window(m, m.dates[0], m.dates[-1])
    assert full.dates == m.dates and np.array_equal(full.returns, m.returns)
    one = slice_window(m, m.dates[2], m.dates[2])
    assert one.n_obs == 1 and np.array_equal(one.returns[0], m.returns[2])
    with pytest.raises(DataError, match="no observations"):
        slice_window(m, D(1999, 1, 1), D(1999, 2, 1))


def test_without_asset():
    m = make_matrix(np.arange(12.0).reshape(4, 3) / 100, shortable_index=2)
    reduced = m.without_asset(2)
    assert reduced.assets == ("A0", "A1") and reduced.shortable_index is None
    assert np.array_equal(reduced.returns, m.returns[:, :2])
