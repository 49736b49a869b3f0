"""Daily-rebalanced rolling-window simulation."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .market_data import ReturnMatrix
from .solver import ConstraintSet
from .strategies import STRATEGY_IDS, StrategyConfig, WeightVector, allocate


class WipeoutError(RuntimeError):
    """The portfolio lost everything within one day; wealth would go non-positive."""


@dataclass(frozen=True)
class BacktestResult:
    strategy_id: str
    assets: tuple[str, ...]
    dates: tuple[dt.date, ...]
    weights: tuple[WeightVector, ...]
    portfolio_returns: np.ndarray
    wealth: np.ndarray
    asset_returns: np.ndarray
    flags: tuple[tuple[str, ...], ...]
    w0: float = 1.0
    universe: str = "with"
    budget_mode: str = "inequality"

    @property
    def weight_matrix(self) -> np.ndarray:
        return np.vstack([w.weights for w in self.weights])

    def __len__(self):
        return len(self.dates)


def paper_constraints(matrix: ReturnMatrix) -> ConstraintSet:
    return ConstraintSet(matrix.n_assets, matrix.shortable_index)


def run(
    matrix: ReturnMatrix,
    strategy: str,
    cfg: StrategyConfig,
    c: ConstraintSet | None = None,
    universe: str = "with",
) -> BacktestResult:
    """Weights for row t use rows t-M .. t-1 only; the realized return is x_t' r_t."""
    if strategy not in STRATEGY_IDS:
        raise ValueError(f"unknown strategy {strategy!r}")
    m = cfg.window_size
    t_total = matrix.n_obs
    if t_total <= m:
        raise ValueError(f"need more than {m} observations for window size {m}, have {t_total}")
    c = c or paper_constraints(matrix)
    if c.n_assets != matrix.n_assets:
        raise ValueError("constraint set does not match the number of assets")

    r = matrix.returns
    weights: list[WeightVector] = []
    previous = None
    for t in range(m, t_total):
        wv = allocate(strategy, r[t - m:t], cfg, c, as_of=matrix.dates[t], previous=previous)
        weights.append(wv)
        previous = wv

    x = np.vstack([w.weights for w in weights])
    port = np.einsum("ti,ti->t", x, r[m:])
    if np.any(port <= -1.0):
        bad = int(np.flatnonzero(port <= -1.0)[0])
        raise WipeoutError(
            f"{strategy}: portfolio return {port[bad]:.6g} on {matrix.dates[m + bad]} wipes out wealth"
        )
    wealth = cfg.w0 * np.cumprod(1.0 + port)
    return BacktestResult(
        strategy_id=strategy,
        assets=matrix.assets,
        dates=matrix.dates[m:],
        weights=tuple(weights),
        portfolio_returns=port,
        wealth=wealth,
        asset_returns=r[m:],
        flags=tuple(w.flags for w in weights),
        w0=cfg.w0,
        universe=universe,
        budget_mode=cfg.budget_mode(strategy),
    )


def run_universe_pair(
    matrix: ReturnMatrix,
    strategy: str,
    cfg: StrategyConfig,
    c: ConstraintSet | None = None,
) -> tuple[BacktestResult, BacktestResult]:
    """Run with the shortable asset and again with its column removed (long-only)."""
    if matrix.shortable_index is None:
        raise ValueError("matrix has no shortable asset to remove")
    with_short = run(matrix, strategy, cfg, c, universe="with")
    reduced = matrix.without_asset(matrix.shortable_index)
    without = run(reduced, strategy, cfg, ConstraintSet(reduced.n_assets), universe="without")
    return with_short, without


def drifted_weights(x_prev, r_prev) -> np.ndarray:
    """Buy-and-hold weights just before the next rebalance: x_i (1 + r_i) / (1 + x'r)."""
    x = np.asarray(getattr(x_prev, "weights", x_prev), dtype=float)
    r = np.asarray(r_prev, dtype=float)
    gross = 1.0 + float(x @ r)
    if gross <= 0:
        raise WipeoutError(f"portfolio gross return {gross:.6g} is not positive")
    return x * (1.0 + r) / gross
