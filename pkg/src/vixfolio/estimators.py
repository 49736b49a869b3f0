"""Rolling-window moment estimators.

Conventions, matching the printed estimator formulas:

    mean          1/M                (arithmetic) or geometric
    covariance    1/(M-1)
    co-skewness   1/M   (N x N^2 layout, block i holds s_i..)
    co-kurtosis   1/M   (N x N^3 layout, block (i, j) holds k_ij..)

``denominator="uniform"`` switches the covariance to 1/M as well, which makes
x' Sigma x the same second moment the standardized skewness and kurtosis use.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Literal

import numpy as np

EstimatorKind = Literal["AM", "GM"]
Denominator = Literal["paper", "uniform"]


def _as_window(window) -> np.ndarray:
    w = np.asarray(window, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.ndim != 2 or w.shape[0] < 1:
        raise ValueError("window must be a non-empty M x N array")
    return w


def arithmetic_mean(window) -> np.ndarray:
    w = _as_window(window)
    return w.sum(axis=0) / w.shape[0]


def geometric_mean(window) -> np.ndarray:
    """(prod(1 + r))^(1/M) - 1 per column, evaluated in log space."""
    w = _as_window(window)
    if np.any(w <= -1.0):
        raise ValueError("geometric mean undefined for returns <= -1")
    return np.expm1(np.log1p(w).sum(axis=0) / w.shape[0])


def covariance(window, mu, denominator: Denominator = "paper") -> np.ndarray:
    w = _as_window(window)
    m = w.shape[0]
    if denominator == "paper":
        if m < 2:
            raise ValueError("covariance needs at least two observations")
        scale = 1.0 / (m - 1)
    elif denominator == "uniform":
        scale = 1.0 / m
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    d = w - np.asarray(mu, dtype=float)
    cov = scale * (d.T @ d)
    # exact symmetry regardless of BLAS accumulation order
    return 0.5 * (cov + cov.T)


def coskewness_matrix(window, mu) -> np.ndarray:
    """N x N^2 co-skewness matrix; entry [i, j*N + l] is s_ijl."""
    w = _as_window(window)
    m, n = w.shape
    d = w - np.asarray(mu, dtype=float)
    pairs = (d[:, :, None] * d[:, None, :]).reshape(m, n * n)
    return (d.T @ pairs) / m


def cokurtosis_matrix(window, mu) -> np.ndarray:
    """N x N^3 co-kurtosis matrix; entry [i, (j*N + l)*N + m] is k_ijlm."""
    w = _as_window(window)
    m, n = w.shape
    d = w - np.asarray(mu, dtype=float)
    pairs = (d[:, :, None] * d[:, None, :]).reshape(m, n * n)
    return ((pairs.T @ pairs) / m).reshape(n, n**3)


@dataclass(frozen=True)
class MomentEstimates:
    mu: np.ndarray
    sigma: np.ndarray
    rm3: np.ndarray | None
    rm4: np.ndarray | None
    window_size: int
    estimator_kind: str
    as_of: dt.date | None = None
    denominator: str = "paper"

    @property
    def n_assets(self) -> int:
        return self.mu.shape[0]


def estimate(
    window,
    kind: EstimatorKind = "AM",
    with_tensors: bool = False,
    *,
    denominator: Denominator = "paper",
    as_of: dt.date | None = None,
) -> MomentEstimates:
    w = _as_window(window)
    if w.shape[0] < 2:
        raise ValueError("estimation window needs at least two observations")
    if kind == "AM":
        mu = arithmetic_mean(w)
    elif kind == "GM":
        mu = geometric_mean(w)
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    sigma = covariance(w, mu, denominator)
    rm3 = coskewness_matrix(w, mu) if with_tensors else None
    rm4 = cokurtosis_matrix(w, mu) if with_tensors else None
    return MomentEstimates(mu, sigma, rm3, rm4, w.shape[0], kind, as_of, denominator)


def portfolio_third_moment(x, rm3) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ (rm3 @ np.kron(x, x)))


def portfolio_fourth_moment(x, rm4) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ (rm4 @ np.kron(x, np.kron(x, x))))


def portfolio_skewness(x, est: MomentEstimates) -> float:
    """x' RM3 (x kron x) / sigma^3 with sigma^2 = x' Sigma x."""
    x = np.asarray(x, dtype=float)
    var = float(x @ est.sigma @ x)
    return portfolio_third_moment(x, est.rm3) / var**1.5


def portfolio_kurtosis(x, est: MomentEstimates, convention: str = "excess") -> float:
    """x' RM4 (x kron x kron x) / sigma^4, minus 3 under the excess convention."""
    x = np.asarray(x, dtype=float)
    var = float(x @ est.sigma @ x)
    k = portfolio_fourth_moment(x, est.rm4) / var**2
    if convention == "excess":
        return k - 3.0
    if convention == "raw":
        return k
    raise ValueError(f"unknown kurtosis convention {convention!r}")
