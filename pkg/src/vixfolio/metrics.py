"""Evaluation metrics for realized portfolio returns.

Normalizations: mean 1/n, variance and Sharpe standard deviation 1/(n-1),
standardized skewness and kurtosis 1/n throughout (their sigma included),
Sortino downside deviation 1/n over the full sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backtest import BacktestResult, drifted_weights


@dataclass(frozen=True)
class MetricsReport:
    strategy_id: str
    to: float
    tr: float
    sortino: float
    ceq: float
    sharpe: float
    asr: float
    skew: float
    kurt: float
    mean: float
    variance: float
    flags: tuple[str, ...] = field(default=())


def _series(returns) -> np.ndarray:
    r = np.asarray(returns, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("empty return series")
    return r


def turnover(weights, mode: str = "target", returns=None, count_initial: bool = False) -> float:
    """Mean over rebalances of sum_i |x_{i,t+1} - x_{i,t+}|.

    In target mode x_{t+} is the previous target weight; in drifted mode it is
    the previous weight after drifting with that day's returns (``returns`` row
    t must be the return realized while holding weights[t]).  With
    ``count_initial`` the first purchase from an all-zero position counts as a
    step.
    """
    x = np.vstack([np.asarray(getattr(w, "weights", w), dtype=float) for w in weights])
    if mode not in ("target", "drifted"):
        raise ValueError(f"unknown turnover mode {mode!r}")
    if mode == "drifted":
        if returns is None:
            raise ValueError("drifted turnover needs the realized returns")
        r = np.asarray(returns, dtype=float)
        before = np.vstack([drifted_weights(x[t], r[t]) for t in range(x.shape[0] - 1)]) if x.shape[0] > 1 else x[:0]
    else:
        before = x[:-1]
    after = x[1:]
    if count_initial:
        before = np.vstack([np.zeros((1, x.shape[1])), before])
        after = x
    if after.shape[0] == 0:
        raise ValueError("turnover needs at least two weight vectors")
    return float(np.abs(after - before).sum(axis=1).mean())


def terminal_return(portfolio_returns) -> float:
    r = _series(portfolio_returns)
    if np.any(r <= -1.0):
        raise ValueError("terminal return undefined when a return is <= -1")
    return float(np.prod(1.0 + r))


def sortino(portfolio_returns, r_f: float = 0.0) -> float:
    """Excess mean over downside deviation; +inf when nothing falls below r_f."""
    r = _series(portfolio_returns)
    downside = np.minimum(r - r_f, 0.0)
    dd = math.sqrt(float(np.sum(downside**2)) / r.size)
    if dd == 0.0:
        return math.inf
    return (float(r.mean()) - r_f) / dd


def ceq_from_moments(mean: float, variance: float, gamma: float) -> float:
    return mean - gamma / 2.0 * variance


def certainty_equivalent(portfolio_returns, gamma: float) -> float:
    r = _series(portfolio_returns)
    if r.size < 2:
        raise ValueError("certainty equivalent needs at least two observations")
    return ceq_from_moments(float(r.mean()), float(r.var(ddof=1)), gamma)


def realized_sharpe(portfolio_returns, r_f: float = 0.0) -> float:
    r = _series(portfolio_returns)
    if r.size < 2:
        raise ValueError("Sharpe ratio needs at least two observations")
    sd = float(r.std(ddof=1))
    if sd == 0.0:
        raise ValueError("Sharpe ratio undefined for zero variance")
    return (float(r.mean()) - r_f) / sd


def realized_moments(portfolio_returns, convention: str = "excess") -> tuple[float, float]:
    """Standardized third and fourth moments with 1/n normalization."""
    r = _series(portfolio_returns)
    if r.size < 2:
        raise ValueError("skewness/kurtosis need at least two observations")
    d = r - r.mean()
    var = float(np.mean(d**2))
    if var == 0.0:
        raise ValueError("skewness/kurtosis undefined for zero variance")
    skew = float(np.mean(d**3)) / var**1.5
    kurt = float(np.mean(d**4)) / var**2
    if convention == "excess":
        kurt -= 3.0
    elif convention != "raw":
        raise ValueError(f"unknown kurtosis convention {convention!r}")
    return skew, kurt


def asr_bracket(sr: float, skew: float, kurt: float, form: str = "paper") -> float:
    bracket = 1.0 + skew / 6.0 * sr - kurt / 24.0 * sr**2
    if form == "paper":
        return bracket
    if form == "pezier_white":
        return sr * bracket
    raise ValueError(f"unknown asr form {form!r}")


def realized_asr(portfolio_returns, r_f: float = 0.0, form: str = "paper", convention: str = "excess") -> float:
    sr = realized_sharpe(portfolio_returns, r_f)
    skew, kurt = realized_moments(portfolio_returns, convention)
    return asr_bracket(sr, skew, kurt, form)


def evaluate(
    result: BacktestResult,
    *,
    r_f: float = 0.0,
    gamma: float = 5.0,
    turnover_mode: str = "target",
    count_initial_turnover: bool = False,
    asr_form: str = "paper",
    kurtosis_convention: str = "excess",
) -> MetricsReport:
    """All metrics for one backtest; undefined ratios become NaN with a flag."""
    r = result.portfolio_returns
    flags = []
    if len(result.weights) > 1 or count_initial_turnover:
        to = turnover(result.weights, turnover_mode, result.asset_returns, count_initial_turnover)
    else:
        to = 0.0
    s = sortino(r, r_f)
    if math.isinf(s):
        flags.append("sortino:no_downside")
    try:
        sr = realized_sharpe(r, r_f)
    except ValueError:
        sr = math.nan
        flags.append("sharpe:zero_variance")
    try:
        skew, kurt = realized_moments(r, kurtosis_convention)
    except ValueError:
        skew = kurt = math.nan
        flags.append("moments:undefined")
    asr = asr_bracket(sr, skew, kurt, asr_form) if math.isfinite(sr) and math.isfinite(skew) else math.nan
    return MetricsReport(
        strategy_id=result.strategy_id,
        to=to,
        tr=terminal_return(r),
        sortino=s,
        ceq=certainty_equivalent(r, gamma),
        sharpe=sr,
        asr=asr,
        skew=skew,
        kurt=kurt,
        mean=float(r.mean()),
        variance=float(r.var(ddof=1)),
        flags=tuple(flags),
    )
