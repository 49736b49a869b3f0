"""Price loading, calendar alignment and simple returns."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised for unreadable, malformed or inconsistent market data."""


@dataclass(frozen=True)
class PriceSeries:
    asset_id: str
    dates: tuple[dt.date, ...]
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != len(prices):
            raise DataError(f"{self.asset_id}: {len(self.dates)} dates but {len(prices)} prices")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError(f"{self.asset_id}: dates must be strictly increasing")
        if np.any(~(prices > 0)):
            raise DataError(f"{self.asset_id}: every price must be positive")

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True)
class ReturnMatrix:
    """T x N simple returns; row t is the return from dates[t-1] to dates[t]."""

    dates: tuple[dt.date, ...]
    assets: tuple[str, ...]
    returns: np.ndarray
    shortable_index: int | None = None

    def __post_init__(self):
        returns = np.array(self.returns, dtype=float)
        if returns.ndim != 2 or returns.shape != (len(self.dates), len(self.assets)):
            raise DataError(
                f"returns shape {returns.shape} does not match "
                f"{len(self.dates)} dates x {len(self.assets)} assets"
            )
        returns.setflags(write=False)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(self.assets))
        if self.shortable_index is not None and not 0 <= self.shortable_index < len(self.assets):
            raise DataError(f"shortable_index {self.shortable_index} out of range")

    @property
    def n_obs(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def without_asset(self, index: int) -> "ReturnMatrix":
        """Drop one column; the result has no shortable asset if it was the one removed."""
        keep = [i for i in range(self.n_assets) if i != index]
        if self.shortable_index is None or self.shortable_index == index:
            short = None
        else:
            short = keep.index(self.shortable_index)
        return ReturnMatrix(
            self.dates,
            tuple(self.assets[i] for i in keep),
            self.returns[:, keep],
            short,
        )


@dataclass(frozen=True)
class FormatSpec:
    """Column mapping for a delimited price file.

    ``columns`` maps asset id to header name, in the asset order to use.
    """

    columns: Mapping[str, str]
    date_column: str = "Date"
    delimiter: str = ","
    date_format: str = "%Y-%m-%d"


def _parse_price(text: str) -> float | None:
    text = text.strip().replace(",", "") if text else ""
    if text == "":
        return None
    return float(text)


def header_columns(path: str | Path, date_column: str = "Date", delimiter: str = ",") -> dict[str, str]:
    """Identity mapping for every header column except the date, in file order."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"price file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        try:
            header = [h.strip() for h in next(csv.reader(fh, delimiter=delimiter))]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
    if date_column not in header:
        raise DataError(f"{path}: malformed header, missing columns {[date_column]}")
    return {h: h for h in header if h != date_column}


def load_prices(path: str | Path, format_spec: FormatSpec) -> list[PriceSeries]:
    """Read one PriceSeries per mapped column.

    Blank cells mean the asset has no observation on that date. Row numbers in
    diagnostics are 1-based and count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"price file not found: {path}")
    if not format_spec.columns:
        raise DataError("format spec declares no asset columns")

    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, delimiter=format_spec.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: malformed header, duplicate column names {header}")
        wanted = [format_spec.date_column, *format_spec.columns.values()]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"{path}: malformed header, missing columns {missing}")
        date_pos = header.index(format_spec.date_column)
        col_pos = {a: header.index(c) for a, c in format_spec.columns.items()}

        obs: dict[str, dict[dt.date, float]] = {a: {} for a in format_spec.columns}
        seen_dates: list[dt.date] = []
        seen: set[dt.date] = set()
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DataError(f"{path}: row {rownum}: expected {len(header)} fields, got {len(row)}")
            try:
                day = dt.datetime.strptime(row[date_pos].strip(), format_spec.date_format).date()
            except ValueError:
                raise DataError(
                    f"{path}: row {rownum}: unparseable date {row[date_pos]!r}"
                ) from None
            if day in seen:
                raise DataError(f"{path}: row {rownum}: duplicate date {day}")
            seen.add(day)
            seen_dates.append(day)
            for asset, pos in col_pos.items():
                cell = row[pos]
                try:
                    price = _parse_price(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {rownum}, asset {asset}: unparseable price {cell!r}"
                    ) from None
                if price is None:
                    continue
                if not price > 0 or not np.isfinite(price):
                    raise DataError(
                        f"{path}: row {rownum}, asset {asset}: non-positive price {cell!r}"
                    )
                obs[asset][day] = price

    if any(b < a for a, b in zip(seen_dates, seen_dates[1:])):
        logger.warning("%s: dates are not in ascending order; rows re-sorted", path)

    out = []
    for asset, values in obs.items():
        days = sorted(values)
        out.append(PriceSeries(asset, tuple(days), np.array([values[d] for d in days])))
    return out


def align_calendars(series: Sequence[PriceSeries], policy: str = "intersection") -> list[PriceSeries]:
    """Restrict every series to the dates on which all series have a price."""
    if policy != "intersection":
        raise ValueError(f"unknown alignment policy {policy!r}")
    if len(series) < 2:
        raise DataError("align_calendars needs at least two series")
    common = set(series[0].dates)
    for s in series[1:]:
        common &= set(s.dates)
    if not common:
        raise DataError("calendars have no date in common")
    out = []
    for s in series:
        keep = [i for i, d in enumerate(s.dates) if d in common]
        out.append(PriceSeries(s.asset_id, tuple(s.dates[i] for i in keep), s.prices[keep]))
    return out


def compute_returns(series: Sequence[PriceSeries], shortable_id: str | None = None) -> ReturnMatrix:
    """Simple returns P_t / P_{t-1} - 1 for aligned series."""
    if not series:
        raise DataError("no series given")
    dates = series[0].dates
    for s in series[1:]:
        if s.dates != dates:
            raise DataError(f"series {s.asset_id} is not aligned with {series[0].asset_id}")
    if len(dates) < 2:
        raise DataError("need at least two prices to form a return")
    assets = tuple(s.asset_id for s in series)
    if shortable_id is not None and shortable_id not in assets:
        raise DataError(f"unknown shortable asset {shortable_id!r}; have {list(assets)}")
    prices = np.column_stack([s.prices for s in series])
    returns = prices[1:] / prices[:-1] - 1.0
    short = assets.index(shortable_id) if shortable_id is not None else None
    return ReturnMatrix(dates[1:], assets, returns, short)


def slice_window(matrix: ReturnMatrix, start_date: dt.date, end_date: dt.date) -> ReturnMatrix:
    """Rows with start_date <= date <= end_date, asset order preserved."""
    if start_date > end_date:
        raise DataError(f"start {start_date} is after end {end_date}")
    keep = [i for i, d in enumerate(matrix.dates) if start_date <= d <= end_date]
    if not keep:
        raise DataError(f"no observations between {start_date} and {end_date}")
    return ReturnMatrix(
        tuple(matrix.dates[i] for i in keep),
        matrix.assets,
        matrix.returns[keep],
        matrix.shortable_index,
    )
