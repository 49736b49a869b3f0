"""Cross-strategy tables and plot-ready density data."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .backtest import BacktestResult
from .market_data import ReturnMatrix
from .metrics import MetricsReport, evaluate

BASE_COLUMNS = ("CEQ", "TO", "S", "TR")
EXTRA_COLUMNS = ("SR", "ASR", "skew", "kurt")
_FIELD = {
    "CEQ": "ceq",
    "TO": "to",
    "S": "sortino",
    "TR": "tr",
    "SR": "sharpe",
    "ASR": "asr",
    "skew": "skew",
    "kurt": "kurt",
}


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    cells: np.ndarray  # NaN marks an absent cell
    universe_tag: str
    date_range: tuple[dt.date, dt.date]
    flags: dict

    def cell(self, strategy_id: str, column: str) -> float:
        return float(self.cells[self.rows.index(strategy_id), self.columns.index(column)])


@dataclass(frozen=True)
class CrossMomentTable:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    cells: np.ndarray
    kind: str


def build_comparison(
    results: list[BacktestResult],
    *,
    r_f: float = 0.0,
    gamma: float = 5.0,
    turnover_mode: str = "target",
    count_initial_turnover: bool = False,
    asr_form: str = "paper",
    kurtosis_convention: str = "excess",
    extended: bool = False,
) -> ComparisonTable:
    """One row per strategy, in the order given."""
    if not results:
        raise ValueError("no backtest results to compare")
    dates = results[0].dates
    universe = results[0].universe
    for res in results[1:]:
        if res.dates != dates:
            raise ValueError(f"{res.strategy_id}: date range differs from {results[0].strategy_id}")
        if res.assets != results[0].assets:
            raise ValueError(f"{res.strategy_id}: asset universe differs from {results[0].strategy_id}")
    columns = BASE_COLUMNS + (EXTRA_COLUMNS if extended else ())
    reports: list[MetricsReport] = [
        evaluate(
            res,
            r_f=r_f,
            gamma=gamma,
            turnover_mode=turnover_mode,
            count_initial_turnover=count_initial_turnover,
            asr_form=asr_form,
            kurtosis_convention=kurtosis_convention,
        )
        for res in results
    ]
    cells = np.array([[getattr(rep, _FIELD[c]) for c in columns] for rep in reports], dtype=float)
    return ComparisonTable(
        rows=tuple(r.strategy_id for r in results),
        columns=columns,
        cells=cells,
        universe_tag=universe,
        date_range=(dates[0], dates[-1]),
        flags={rep.strategy_id: rep.flags for rep in reports},
    )


def asset_portfolio_covariance(
    matrix: ReturnMatrix | None, result: BacktestResult, kind: str = "covariance"
) -> np.ndarray:
    """Covariance or correlation of each asset's daily return with the portfolio return.

    Rows of ``matrix`` are matched to the result's out-of-sample dates; with
    ``matrix=None`` the asset returns stored on the result are used.
    """
    if matrix is None:
        a = result.asset_returns
    else:
        pos = {d: i for i, d in enumerate(matrix.dates)}
        missing = [d for d in result.dates if d not in pos]
        if missing:
            raise ValueError(f"matrix lacks {len(missing)} backtest dates, first {missing[0]}")
        if matrix.assets != result.assets:
            raise ValueError("matrix assets differ from the backtest universe")
        a = matrix.returns[[pos[d] for d in result.dates]]
    p = result.portfolio_returns
    n = p.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    da = a - a.mean(axis=0)
    dp = p - p.mean()
    cov = da.T @ dp / (n - 1)
    if kind == "covariance":
        return cov
    if kind != "correlation":
        raise ValueError(f"unknown kind {kind!r}")
    sa = np.sqrt(np.sum(da**2, axis=0) / (n - 1))
    sp = math.sqrt(float(dp @ dp) / (n - 1))
    if sp == 0.0 or np.any(sa == 0.0):
        raise ValueError("correlation undefined for a zero-variance series")
    return np.clip(cov / (sa * sp), -1.0, 1.0)


def cross_moment_table(results: list[BacktestResult], kind: str = "covariance") -> CrossMomentTable:
    """Assets x strategies; a strategy whose portfolio has zero variance gets NaN under correlation."""
    if not results:
        raise ValueError("no backtest results")
    cols = []
    for res in results:
        try:
            cols.append(asset_portfolio_covariance(None, res, kind))
        except ValueError:
            cols.append(np.full(len(res.assets), np.nan))
    return CrossMomentTable(
        rows=results[0].assets,
        columns=tuple(r.strategy_id for r in results),
        cells=np.column_stack(cols),
        kind=kind,
    )


def silverman_bandwidth(x) -> float:
    """0.9 min(sd, IQR/1.34) n^(-1/5), falling back to whichever spread is non-zero."""
    x = np.asarray(x, dtype=float)
    n = x.size
    sd = float(x.std(ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(sd, iqr) if sd > 0 and iqr > 0 else max(sd, iqr)
    if spread == 0.0:
        spread = max(abs(float(x.mean())), 1.0) * 1e-6
    return 0.9 * spread * n ** (-0.2)


@dataclass(frozen=True)
class DensityData:
    bin_edges: np.ndarray
    hist_density: np.ndarray
    grid: np.ndarray
    kde: np.ndarray
    bandwidth: float


def density_data(portfolio_returns, bins: int = 50, grid_points: int = 512) -> DensityData:
    """Normalized histogram and a Gaussian KDE on [min - 3h, max + 3h]."""
    x = np.sort(np.asarray(portfolio_returns, dtype=float).ravel())
    if x.size < 10:
        raise ValueError("density estimation needs at least 10 observations")
    hist, edges = np.histogram(x, bins=bins, density=True)
    h = silverman_bandwidth(x)
    grid = np.linspace(x[0] - 3 * h, x[-1] + 3 * h, grid_points)
    # beyond 40 bandwidths the kernel is exactly zero in double precision
    z = np.clip((grid[:, None] - x[None, :]) / h, -40.0, 40.0)
    kde = np.exp(-0.5 * z**2).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return DensityData(edges, hist, grid, kde, h)


def tr_delta(with_table: ComparisonTable, without_table: ComparisonTable) -> list[tuple[str, float, float, float]]:
    """(strategy, TR with shortable asset, TR without, difference) per strategy."""
    out = []
    for sid in with_table.rows:
        a = with_table.cell(sid, "TR")
        b = without_table.cell(sid, "TR") if sid in without_table.rows else math.nan
        out.append((sid, a, b, a - b))
    return out
