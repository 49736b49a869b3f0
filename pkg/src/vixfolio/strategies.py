"""The six allocation rules, expressed as objective + constraint bundles."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .estimators import MomentEstimates, estimate
from .solver import (
    ConstraintSet,
    InfeasibleTargetError,
    SolverError,
    project_feasible,
    solve_nonlinear,
    solve_qp,
)

STRATEGY_IDS = (
    "EW",
    "GMV-AM",
    "GMV-GM",
    "T-AM",
    "T-GM",
    "SR-AM",
    "SR-GM",
    "ASR-AM",
    "ASR-GM",
    "CRRA",
)

DEFAULT_BUDGET_MODES = {"GMV-AM": "equality", "GMV-GM": "equality"}


@dataclass(frozen=True)
class StrategyConfig:
    r_f: float = 0.0
    mu_target: float = 2.6e-4
    gamma: float = 5.0
    window_size: int = 90
    w0: float = 1.0
    budget_modes: Mapping[str, str] = field(default_factory=dict)
    asr_form: str = "paper"
    kurtosis_convention: str = "excess"
    moment_denominator: str = "paper"
    starts: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if self.window_size < 2:
            raise ValueError("window_size must be >= 2")
        if self.asr_form not in ("paper", "pezier_white"):
            raise ValueError(f"unknown asr_form {self.asr_form!r}")
        if self.kurtosis_convention not in ("excess", "raw"):
            raise ValueError(f"unknown kurtosis_convention {self.kurtosis_convention!r}")

    def budget_mode(self, strategy_id: str) -> str:
        if strategy_id in self.budget_modes:
            return self.budget_modes[strategy_id]
        return DEFAULT_BUDGET_MODES.get(strategy_id, "inequality")


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    as_of: dt.date | None
    strategy_id: str
    estimator_kind: str
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError(f"{self.strategy_id}: non-finite weights {w}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _fallback(reason, previous, c, as_of, strategy_id, kind) -> WeightVector:
    """Hold the previous target weights, or equal weight before the first rebalance."""
    if previous is not None:
        x = previous.weights
    else:
        x = project_feasible(c.equal_weight(), c)
    return WeightVector(x, as_of, strategy_id, kind, (f"fallback:{reason}",))


def equally_weighted(n: int, as_of: dt.date | None = None) -> WeightVector:
    if n < 1:
        raise ValueError("need at least one asset")
    return WeightVector(np.full(n, 1.0 / n), as_of, "EW", "none")


def global_min_variance(
    est: MomentEstimates,
    c: ConstraintSet,
    cfg: StrategyConfig | None = None,
    strategy_id: str = "GMV-AM",
) -> WeightVector:
    cfg = cfg or StrategyConfig()
    c = c.with_budget_mode(cfg.budget_mode(strategy_id))
    rep = solve_qp(est.sigma, c)
    flags = rep.flags + (() if rep.converged else ("solver:not_converged",))
    return WeightVector(rep.x_star, est.as_of, strategy_id, est.estimator_kind, flags)


def mpt_target(
    est: MomentEstimates,
    cfg: StrategyConfig,
    c: ConstraintSet,
    previous: WeightVector | None = None,
    strategy_id: str = "T-AM",
) -> WeightVector:
    c = c.with_budget_mode(cfg.budget_mode(strategy_id))
    try:
        rep = solve_qp(est.sigma, c, mu=est.mu, target=cfg.mu_target)
    except InfeasibleTargetError:
        return _fallback("infeasible_target", previous, c, est.as_of, strategy_id, est.estimator_kind)
    flags = rep.flags + (() if rep.converged else ("solver:not_converged",))
    return WeightVector(rep.x_star, est.as_of, strategy_id, est.estimator_kind, flags)


# objectives ---------------------------------------------------------------


def sharpe_objective(mu, sigma, r_f: float = 0.0):
    """(x'mu - r_f) / sqrt(x' sigma x) and its gradient; -inf where the variance is 0."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)

    def value(x):
        v = float(x @ sigma @ x)
        if v <= 0:
            return -math.inf
        return (float(x @ mu) - r_f) / math.sqrt(v)

    def grad(x):
        sx = sigma @ x
        v = float(x @ sx)
        sd = math.sqrt(v)
        p = float(x @ mu) - r_f
        return mu / sd - p * sx / (sd * v)

    return value, grad


def _asr_parts(x, mu, sigma, rm3, rm4, r_f, convention):
    sx = sigma @ x
    v = float(x @ sx)
    sd = math.sqrt(v)
    p = float(x @ mu) - r_f
    sr = p / sd
    g_sr = mu / sd - p * sx / (sd * v)
    xx = np.outer(x, x).ravel()
    t3 = rm3 @ xx
    t4 = rm4 @ np.outer(xx, x).ravel()
    m3 = float(x @ t3)
    m4 = float(x @ t4)
    skew = m3 / v**1.5
    g_skew = 3.0 * t3 / v**1.5 - 3.0 * m3 * sx / v**2.5
    kurt = m4 / v**2
    g_kurt = 4.0 * t4 / v**2 - 4.0 * m4 * sx / v**3
    if convention == "excess":
        kurt -= 3.0
    bracket = 1.0 + skew * sr / 6.0 - kurt * sr**2 / 24.0
    g_bracket = (g_skew * sr + skew * g_sr) / 6.0 - (g_kurt * sr**2 + 2.0 * kurt * sr * g_sr) / 24.0
    return sr, g_sr, bracket, g_bracket, v


def asr_objective(est: MomentEstimates, r_f: float = 0.0, form: str = "paper", convention: str = "excess"):
    """Adjusted Sharpe ratio with skewness and kurtosis taken from the co-moment tensors.

    ``form="paper"`` is the bare bracket 1 + S/6 SR - K/24 SR^2;
    ``form="pezier_white"`` multiplies it by SR.
    """
    if est.rm3 is None or est.rm4 is None:
        raise ValueError("adjusted Sharpe needs co-skewness and co-kurtosis estimates")
    if form not in ("paper", "pezier_white"):
        raise ValueError(f"unknown asr form {form!r}")
    args = (est.mu, est.sigma, est.rm3, est.rm4, r_f, convention)

    def value(x):
        if float(x @ est.sigma @ x) <= 0:
            return -math.inf
        sr, _, bracket, _, _ = _asr_parts(x, *args)
        return bracket if form == "paper" else sr * bracket

    def grad(x):
        sr, g_sr, bracket, g_bracket, _ = _asr_parts(x, *args)
        if form == "paper":
            return g_bracket
        return g_sr * bracket + sr * g_bracket

    return value, grad


def crra_objective(window, gamma: float):
    """Mean CRRA utility of 1 + x'r_j over the window; -inf once any 1 + x'r_j <= 0."""
    r = np.asarray(window, dtype=float)
    m = r.shape[0]
    log_branch = gamma == 1.0

    def value(x):
        gross = 1.0 + r @ x
        if np.any(gross <= 0):
            return -math.inf
        if log_branch:
            return float(np.log(gross).sum() / m)
        return float((gross ** (1.0 - gamma)).sum() / (m * (1.0 - gamma)))

    def grad(x):
        gross = 1.0 + r @ x
        return (gross ** (-gamma)) @ r / m

    return value, grad


def _scale_to_budget(x, c: ConstraintSet) -> np.ndarray:
    """Push a scale-free optimum out along its ray until a constraint binds."""
    if c.budget_mode == "equality" or not np.any(x):
        return x
    A, b, _, _ = c.linear()
    ax = A @ x
    pos = ax > 1e-15
    if not np.any(pos):
        return x
    scale = float(np.min(b[pos] / ax[pos]))
    return project_feasible(scale * x, c) if scale > 0 else x


def _nonlinear(value, grad, cfg, c, as_of, strategy_id, kind, previous, scale_free):
    try:
        rep = solve_nonlinear(value, grad, c, "max", starts=cfg.starts, seed=cfg.seed)
    except SolverError:
        return _fallback("zero_variance", previous, c, as_of, strategy_id, kind)
    x = rep.x_star
    if scale_free:
        x = _scale_to_budget(x, c)
    flags = () if rep.converged else ("solver:not_converged",)
    return WeightVector(x, as_of, strategy_id, kind, flags)


def max_sharpe(
    est: MomentEstimates,
    cfg: StrategyConfig,
    c: ConstraintSet,
    previous: WeightVector | None = None,
    strategy_id: str = "SR-AM",
) -> WeightVector:
    c = c.with_budget_mode(cfg.budget_mode(strategy_id))
    best, _ = c.max_linear(est.mu)
    if best <= cfg.r_f:
        return _fallback("no_positive_excess", previous, c, est.as_of, strategy_id, est.estimator_kind)
    value, grad = sharpe_objective(est.mu, est.sigma, cfg.r_f)
    return _nonlinear(value, grad, cfg, c, est.as_of, strategy_id, est.estimator_kind, previous, cfg.r_f == 0)


def max_adjusted_sharpe(
    est: MomentEstimates,
    cfg: StrategyConfig,
    c: ConstraintSet,
    previous: WeightVector | None = None,
    strategy_id: str = "ASR-AM",
) -> WeightVector:
    c = c.with_budget_mode(cfg.budget_mode(strategy_id))
    value, grad = asr_objective(est, cfg.r_f, cfg.asr_form, cfg.kurtosis_convention)
    return _nonlinear(value, grad, cfg, c, est.as_of, strategy_id, est.estimator_kind, previous, cfg.r_f == 0)


def max_crra(
    window,
    cfg: StrategyConfig,
    c: ConstraintSet,
    previous: WeightVector | None = None,
    as_of: dt.date | None = None,
) -> WeightVector:
    c = c.with_budget_mode(cfg.budget_mode("CRRA"))
    value, grad = crra_objective(window, cfg.gamma)
    return _nonlinear(value, grad, cfg, c, as_of, "CRRA", "none", previous, False)


def allocate(
    strategy_id: str,
    window,
    cfg: StrategyConfig,
    c: ConstraintSet,
    as_of: dt.date | None = None,
    previous: WeightVector | None = None,
) -> WeightVector:
    """Weights for one rebalance date from the estimation window alone."""
    if strategy_id not in STRATEGY_IDS:
        raise ValueError(f"unknown strategy {strategy_id!r}; expected one of {STRATEGY_IDS}")
    if strategy_id == "EW":
        return equally_weighted(c.n_assets, as_of)
    if strategy_id == "CRRA":
        return max_crra(window, cfg, c, previous, as_of)
    family, kind = strategy_id.split("-")
    est = estimate(
        window,
        kind,
        with_tensors=family == "ASR",
        denominator=cfg.moment_denominator,
        as_of=as_of,
    )
    if family == "GMV":
        return global_min_variance(est, c, cfg, strategy_id)
    if family == "T":
        return mpt_target(est, cfg, c, previous, strategy_id)
    if family == "SR":
        return max_sharpe(est, cfg, c, previous, strategy_id)
    return max_adjusted_sharpe(est, cfg, c, previous, strategy_id)

