"""Deterministic synthetic price panel: six crypto assets, gold and a volatility index.

Crypto trades every calendar day; gold and the volatility index only on
weekdays outside a few fixed holidays, so calendar alignment has work to do.
Run ``python -m vixfolio.synthetic <out.csv>`` to regenerate the bundled file.
"""

from __future__ import annotations

import csv
import datetime as dt
import sys
from importlib import resources
from pathlib import Path

import numpy as np

ASSETS = ("BTC", "ETH", "BNB", "USDT", "ADA", "XRP", "GOLD", "VIX")
START = dt.date(2018, 10, 31)
END = dt.date(2021, 10, 31)
SEED = 20211031

_BETA = np.array([1.0, 1.2, 1.1, 0.0, 1.3, 1.1])
_DRIFT = np.array([0.0022, 0.0030, 0.0040, 0.0, 0.0032, 0.0018])
_IDIO = np.array([0.015, 0.020, 0.025, 0.0, 0.028, 0.027])
_START_PRICE = np.array([6300.0, 200.0, 5.2, 1.0, 0.07, 0.45])


def _closed(day: dt.date) -> bool:
    return day.weekday() >= 5 or (day.month, day.day) in ((1, 1), (7, 4), (12, 25))


def generate(start: dt.date = START, end: dt.date = END, seed: int = SEED):
    """Return (dates, header, rows) with None marking a missing price."""
    rng = np.random.default_rng(seed)
    n_days = (end - start).days + 1
    dates = [start + dt.timedelta(days=k) for k in range(n_days)]

    factor = 0.03 * rng.standard_t(4, size=n_days) / np.sqrt(2.0)
    idio = rng.standard_normal((n_days, 6)) * _IDIO
    crypto_ret = _DRIFT + factor[:, None] * _BETA + idio
    crypto_ret[:, 3] = 0.0
    crypto = _START_PRICE * np.cumprod(1.0 + crypto_ret, axis=0)
    # the stablecoin wanders around its peg
    crypto[:, 3] = 1.0 + 0.002 * rng.standard_normal(n_days)

    gold = np.empty(n_days)
    vix = np.empty(n_days)
    g, log_v = 1215.0, np.log(19.0)
    for k in range(n_days):
        shock = factor[k] / 0.03
        g *= 1.0 + 0.0003 - 0.001 * shock + 0.008 * rng.standard_normal()
        log_v += 0.04 * (np.log(19.0) - log_v) - 0.03 * shock + 0.06 * rng.standard_normal()
        gold[k] = g
        vix[k] = np.exp(log_v)

    header = ["Date", *ASSETS]
    rows = []
    for k, day in enumerate(dates):
        tradfi = None if _closed(day) else (gold[k], vix[k])
        cells = [*crypto[k], *(tradfi or (None, None))]
        rows.append([day.isoformat(), *("" if v is None else f"{v:.6f}" for v in cells)])
    return dates, header, rows


def write_csv(path: str | Path, **kwargs) -> Path:
    path = Path(path)
    _, header, rows = generate(**kwargs)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def bundled_config() -> Path:
    """Path of the config that runs the pipeline on the bundled synthetic prices."""
    return Path(str(resources.files("vixfolio") / "data" / "synthetic.cfg"))


def bundled_prices() -> Path:
    return Path(str(resources.files("vixfolio") / "data" / "synthetic_prices.csv"))


if __name__ == "__main__":
    write_csv(sys.argv[1] if len(sys.argv) > 1 else "synthetic_prices.csv")
