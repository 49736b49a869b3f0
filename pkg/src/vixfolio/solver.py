"""Small dense solvers for the allocation problems.

Every problem lives on the same polytope: box bounds per asset, a cap on the
sum of the long-only assets (optionally an equality), and a cap on the sum of
all weights.  With eight assets the whole thing is tiny, so the QP is a plain
primal active-set method and general objectives use projected quasi-Newton
steps (each step is a QP over the polytope) from several starting points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FEAS_TOL = 1e-8
EIG_FLOOR = 1e-12


class SolverError(RuntimeError):
    pass


class InfeasibleTargetError(SolverError):
    """No point of the polytope reaches the requested return floor."""

    def __init__(self, target: float, best: float):
        super().__init__(f"return floor {target:.6g} unattainable; best feasible return is {best:.6g}")
        self.target = target
        self.best = best


@dataclass(frozen=True)
class ConstraintSet:
    """Box + budget constraints.

    Non-shortable assets live in [0, 1], the shortable one in [-1, 1].  The long
    budget caps the sum over non-shortable assets at 1 (``budget_mode="equality"``
    makes it bind); the total cap limits the sum over all assets to 1.
    """

    n_assets: int
    shortable_index: int | None = None
    budget_mode: str = "inequality"
    lower: np.ndarray = field(default=None)
    upper: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.n_assets
        if n < 1:
            raise ValueError("need at least one asset")
        if self.budget_mode not in ("inequality", "equality"):
            raise ValueError(f"unknown budget_mode {self.budget_mode!r}")
        if self.shortable_index is not None and not 0 <= self.shortable_index < n:
            raise ValueError("shortable_index out of range")
        lower = np.zeros(n) if self.lower is None else np.array(self.lower, dtype=float)
        upper = np.ones(n) if self.upper is None else np.array(self.upper, dtype=float)
        if self.lower is None and self.shortable_index is not None:
            lower[self.shortable_index] = -1.0
        if lower.shape != (n,) or upper.shape != (n,) or np.any(lower > upper):
            raise ValueError("bounds must be length-N with lower <= upper")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def with_budget_mode(self, mode: str) -> "ConstraintSet":
        return ConstraintSet(self.n_assets, self.shortable_index, mode, self.lower, self.upper)

    @property
    def long_mask(self) -> np.ndarray:
        mask = np.ones(self.n_assets, dtype=bool)
        if self.shortable_index is not None:
            mask[self.shortable_index] = False
        return mask

    def linear(self):
        """(A, b, E, e) with A x <= b and E x = e, bounds included in A."""
        n = self.n_assets
        eye = np.eye(n)
        rows = [-eye, eye]
        rhs = [-self.lower, self.upper]
        long_row = self.long_mask.astype(float)
        E = np.zeros((0, n))
        e = np.zeros(0)
        if self.budget_mode == "equality":
            E = long_row[None, :]
            e = np.ones(1)
        else:
            rows.append(long_row[None, :])
            rhs.append(np.ones(1))
        if self.shortable_index is not None:
            rows.append(np.ones((1, n)))
            rhs.append(np.ones(1))
        return np.vstack(rows), np.concatenate(rhs), E, e

    def violation(self, x) -> float:
        A, b, E, e = self.linear()
        x = np.asarray(x, dtype=float)
        v = np.max(A @ x - b, initial=0.0)
        if E.shape[0]:
            v = max(v, float(np.max(np.abs(E @ x - e))))
        return float(v)

    def is_feasible(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x))) and self.violation(x) <= tol

    def feasible_point(self) -> np.ndarray:
        """Zero investment, or equal long weights when the long budget must bind."""
        x = np.clip(np.zeros(self.n_assets), self.lower, self.upper)
        if self.budget_mode == "equality":
            mask = self.long_mask
            x[mask] = 1.0 / mask.sum()
            if not self.is_feasible(x):
                raise SolverError("equality budget has no simple feasible point for these bounds")
        return x

    def equal_weight(self) -> np.ndarray:
        return np.full(self.n_assets, 1.0 / self.n_assets)

    def max_linear(self, c) -> tuple[float, np.ndarray]:
        """Exact maximum of c'x over the polytope and a vertex attaining it."""
        c = np.asarray(c, dtype=float)
        long_idx = np.flatnonzero(self.long_mask)
        order = long_idx[np.lexsort((long_idx, -c[long_idx]))]
        forced = self.budget_mode == "equality"

        def fill(budget: float) -> np.ndarray | None:
            # greedy fractional knapsack over the long block
            if forced:
                if budget < 1.0 - 1e-15:
                    return None
                budget = 1.0
            x = np.zeros(self.n_assets)
            x[long_idx] = self.lower[long_idx]
            room = budget - x[long_idx].sum()
            if room < -1e-15:
                return None
            for i in order:
                if room <= 0 or (c[i] <= 0 and not forced):
                    break
                add = min(self.upper[i] - x[i], room)
                x[i] += add
                room -= add
            if forced and room > 1e-15:
                return None
            return x

        s = self.shortable_index
        if s is None:
            x = fill(1.0)
            if x is None:
                raise SolverError("constraint set is infeasible")
            return float(c @ x), x

        # the value is concave piecewise linear in x_s; try every breakpoint
        lo, hi = self.lower[s], self.upper[s]
        cum = self.lower[long_idx].sum() + np.cumsum(self.upper[order] - self.lower[order])
        cands = {lo, hi, 0.0, *(1.0 - cum)}
        best_val, best_x = -math.inf, None
        for xs in sorted(min(max(v, lo), hi) for v in cands):
            x = fill(min(1.0, 1.0 - xs))
            if x is None:
                continue
            x[s] = xs
            if not self.is_feasible(x, 1e-12):
                continue
            val = float(c @ x)
            if val > best_val:
                best_val, best_x = val, x
        if best_x is None:
            raise SolverError("constraint set is infeasible")
        return best_val, best_x


@dataclass
class SolverReport:
    x_star: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    kkt_residual: float
    flags: tuple[str, ...] = ()
    start_index: int | None = None


def _independent_rows(C: np.ndarray, candidates, A: np.ndarray) -> list[int]:
    """Greedy subset of candidate rows of A linearly independent of C and each other."""
    n = A.shape[1]
    basis = []
    for row in C:
        r = row - sum((q @ row) * q for q in basis) if basis else row.copy()
        basis.append(r / np.linalg.norm(r))
    chosen: list[int] = []
    for i in candidates:
        if len(basis) >= n:
            break
        a = A[i]
        r = a - sum((q @ a) * q for q in basis) if basis else a.copy()
        norm = np.linalg.norm(r)
        if norm > 1e-10 * np.linalg.norm(a):
            basis.append(r / norm)
            chosen.append(int(i))
    return chosen


def active_set_qp(H, c, A, b, E, e, x0, working=None, max_iter: int = 500):
    """Minimize 0.5 x'Hx + c'x subject to Ax <= b, Ex = e from a feasible x0.

    H must be positive definite on the feasible directions.  ``working`` is an
    optional warm-start guess of the active inequalities.  Returns
    (x, working_set, iterations, converged).
    """
    n = x0.shape[0]
    x = np.array(x0, dtype=float)
    scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
    H = H / scale
    c = c / scale
    p_eq = E.shape[0]

    active = b - A @ x <= 1e-12
    if working is not None:
        hint = [i for i in working if active[i]]
        rest = [i for i in np.flatnonzero(active) if i not in hint]
        W = _independent_rows(E, hint + rest, A)
    else:
        W = _independent_rows(E, np.flatnonzero(active), A)
    K = np.zeros((n + n, n + n))
    K[:n, :n] = H
    for it in range(1, max_iter + 1):
        g = H @ x + c
        C = np.vstack([E, A[W]]) if W else E
        k = C.shape[0]
        K[:n, n:n + k] = C.T
        K[n:n + k, :n] = C
        K[n:n + k, n:n + k] = 0.0
        rhs = np.zeros(n + k)
        rhs[:n] = -g
        try:
            sol = np.linalg.solve(K[:n + k, :n + k], rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K[:n + k, :n + k], rhs, rcond=None)[0]
        p = sol[:n]
        if np.max(np.abs(p)) <= 1e-13 * max(1.0, np.max(np.abs(x))):
            lam = sol[n + p_eq:]
            if lam.size == 0 or lam.min() >= -1e-12 * max(1.0, np.max(np.abs(g))):
                return x, W, it, True
            W.pop(int(np.argmin(lam)))
            continue
        Ap = A @ p
        alpha, block = 1.0, None
        for i in np.flatnonzero(Ap > 1e-15):
            if i in W:
                continue
            ratio = max(b[i] - A[i] @ x, 0.0) / Ap[i]
            if ratio < alpha:
                alpha, block = ratio, int(i)
        x = x + alpha * p
        if block is not None:
            W.append(block)
    return x, W, max_iter, False


def floor_psd(sigma) -> tuple[np.ndarray, bool]:
    """Symmetrize and floor eigenvalues at EIG_FLOOR; flag whether anything changed."""
    sigma = np.asarray(sigma, dtype=float)
    sym = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() >= EIG_FLOOR:
        return sym, False
    if vals.min() < -1e-10 * max(1.0, abs(vals.max())):
        raise SolverError(f"covariance matrix is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    vals = np.maximum(vals, EIG_FLOOR)
    floored = (vecs * vals) @ vecs.T
    return 0.5 * (floored + floored.T), True


def project_feasible(x, constraints: ConstraintSet) -> np.ndarray:
    """Euclidean projection onto the constraint polytope."""
    x = np.asarray(x, dtype=float)
    if constraints.is_feasible(x, 0.0):
        return x.copy()
    A, b, E, e = constraints.linear()
    n = constraints.n_assets
    start = constraints.feasible_point()
    y = active_set_qp(np.eye(n), -x, A, b, E, e, start)[0]
    return y


def kkt_residual(x, gradient, constraints: ConstraintSet) -> float:
    """Projected-gradient stationarity: |x - P(x + grad)|_inf for a maximization."""
    x = np.asarray(x, dtype=float)
    step = project_feasible(x + np.asarray(gradient, dtype=float), constraints)
    return float(np.max(np.abs(step - x)))


def solve_qp(
    sigma,
    constraints: ConstraintSet,
    mu=None,
    target: float | None = None,
) -> SolverReport:
    """Minimize x' sigma x over the polytope, optionally with x'mu >= target."""
    H, floored = floor_psd(sigma)
    n = constraints.n_assets
    if H.shape != (n, n):
        raise ValueError("sigma does not match the constraint dimension")
    A, b, E, e = constraints.linear()
    if target is not None:
        if mu is None:
            raise ValueError("a return floor needs mu")
        mu = np.asarray(mu, dtype=float)
        best, start = constraints.max_linear(mu)
        if best < target:
            raise InfeasibleTargetError(target, best)
        A = np.vstack([A, -mu[None, :]])
        b = np.concatenate([b, [-target]])
    else:
        start = constraints.feasible_point()
    x, _, iters, ok = active_set_qp(2.0 * H, np.zeros(n), A, b, E, e, start)
    flags = ("sigma_floored",) if floored else ()
    return SolverReport(
        x_star=x,
        objective_value=float(x @ H @ x),
        iterations=iters,
        converged=ok,
        kkt_residual=_qp_residual(x, H, A, b, E, e),
        flags=flags,
    )


def _qp_residual(x, H, A, b, E, e) -> float:
    # stationarity is guaranteed by the active-set exit; report primal feasibility
    v = np.max(A @ x - b, initial=0.0)
    if E.shape[0]:
        v = max(v, float(np.max(np.abs(E @ x - e))))
    return float(v)


def multistart_points(constraints: ConstraintSet, starts: int, seed: int) -> list[np.ndarray]:
    """Zero, equal weight, one vertex per long asset, then seeded random points."""
    n = constraints.n_assets
    pts = [np.zeros(n), constraints.equal_weight()]
    for i in np.flatnonzero(constraints.long_mask):
        v = np.zeros(n)
        v[i] = 1.0
        pts.append(v)
    pts = pts[:starts]
    rng = np.random.default_rng(seed)
    while len(pts) < starts:
        pts.append(rng.uniform(constraints.lower, constraints.upper))
    return [project_feasible(p, constraints) for p in pts]


def _sqp(fun, grad, x, A, b, E, e, max_iter):
    """Projected quasi-Newton descent on fun from a feasible x."""
    fx = fun(x)
    g = grad(x)
    gnorm = float(np.max(np.abs(g)))
    B = np.eye(x.shape[0]) * max(gnorm, 1e-8) * 10.0
    working = None
    for it in range(1, max_iter + 1):
        y, working, _, _ = active_set_qp(B, g - B @ x, A, b, E, e, x, working)
        d = y - x
        if np.max(np.abs(d)) <= 1e-12:
            return x, fx, it, True
        slope = float(g @ d)
        if slope >= 0:
            return x, fx, it, True
        t = 1.0
        while True:
            xn = x + t * d
            fn = fun(xn)
            if math.isnan(fn):
                raise SolverError("objective returned NaN at a feasible point")
            if fn <= fx + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-20:
                return x, fx, it, True
        gn = grad(xn)
        s = xn - x
        yv = gn - g
        Bs = B @ s
        sBs = float(s @ Bs)
        sy = float(s @ yv)
        if sBs > 0:
            if sy < 0.2 * sBs:
                theta = 0.8 * sBs / (sBs - sy)
                r = theta * yv + (1 - theta) * Bs
            else:
                r = yv
            sr = float(s @ r)
            if sr > 0:
                B = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr
                B = 0.5 * (B + B.T)
        df = fx - fn
        x, fx, g = xn, fn, gn
        if df <= 1e-14 * (1.0 + abs(fx)) and np.max(np.abs(s)) <= 1e-10:
            return x, fx, it, True
    return x, fx, max_iter, False


def solve_nonlinear(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    constraints: ConstraintSet,
    sense: str = "max",
    starts: int = 16,
    seed: int = 0,
    max_iter: int = 10_000,
) -> SolverReport:
    """Best local optimum of a smooth objective over the polytope.

    ``fun`` may return -inf (for a maximization) outside its domain; such
    starts are skipped.  NaN is treated as a caller bug.  Among optima equal
    to within 1e-10 (relative) the one closest to equal weight wins, then the
    lowest start index.
    """
    if sense not in ("max", "min"):
        raise ValueError("sense must be 'max' or 'min'")
    sign = -1.0 if sense == "max" else 1.0

    def f(x):
        return sign * float(fun(x))

    def gfun(x):
        return sign * np.asarray(grad(x), dtype=float)

    A, b, E, e = constraints.linear()
    results = []
    for k, x0 in enumerate(multistart_points(constraints, starts, seed)):
        f0 = f(x0)
        if math.isnan(f0):
            raise SolverError("objective returned NaN at a feasible point")
        if not math.isfinite(f0):
            continue
        x, fx, iters, ok = _sqp(f, gfun, x0, A, b, E, e, max_iter)
        results.append((fx, k, x, iters, ok))
    if not results:
        raise SolverError("objective is not finite at any starting point")

    best = min(r[0] for r in results)
    tol = 1e-10 * (1.0 + abs(best))
    ew = constraints.equal_weight()
    tied = [r for r in results if r[0] <= best + tol]
    fx, k, x, iters, ok = min(tied, key=lambda r: (float(np.linalg.norm(r[2] - ew)), r[1]))
    return SolverReport(
        x_star=x,
        objective_value=sign * fx,
        iterations=iters,
        converged=ok,
        kkt_residual=kkt_residual(x, -gfun(x), constraints),
        start_index=k,
    )
