import numpy as np
import pytest
from scipy.optimize import linprog, minimize

from oracles import grid_2d
from vixfolio.solver import (
    ConstraintSet,
    InfeasibleTargetError,
    SolverError,
    floor_psd,
    multistart_points,
    project_feasible,
    solve_nonlinear,
    solve_qp,
)
from vixfolio.strategies import sharpe_objective

SIGMA = np.diag([1.0, 4.0])


def test_gmv_without_budget_floor_is_zero():
    rep = solve_qp(SIGMA, ConstraintSet(2))
    np.testing.assert_allclose(rep.x_star, [0.0, 0.0], atol=1e-12)


def test_gmv_equality_budget_matches_closed_form_and_grid():
    rep = solve_qp(SIGMA, ConstraintSet(2, budget_mode="equality"))
    np.testing.assert_allclose(rep.x_star, [0.8, 0.2], atol=1e-10)
    grid = grid_2d(1e-3, "equality")
    best = grid[np.argmin(np.einsum("ki,ij,kj->k", grid, SIGMA, grid))]
    np.testing.assert_allclose(rep.x_star, best, atol=1e-3)
    assert rep.converged and rep.kkt_residual < 1e-10


def test_infeasible_floor():
    with pytest.raises(InfeasibleTargetError) as info:
        solve_qp(np.eye(2), ConstraintSet(2), mu=[0.01, 0.02], target=0.03)
    assert info.value.best == pytest.approx(0.02)


def test_floor_is_respected():
    mu = np.array([0.001, 0.0005])
    rep = solve_qp(np.diag([1e-4, 1e-4]), ConstraintSet(2), mu=mu, target=2.6e-4)
    assert rep.x_star @ mu >= 2.6e-4 - 1e-10


def test_maximize_negative_norm():
    rep = solve_nonlinear(lambda x: -float(x @ x), lambda x: -2 * x, ConstraintSet(3))
    np.testing.assert_allclose(rep.x_star, 0.0, atol=1e-9)


def test_linear_vertex_solution():
    mu = np.array([0.02, 0.01, -0.05])
    rep = solve_nonlinear(lambda x: float(x @ mu), lambda x: mu, ConstraintSet(3))
    np.testing.assert_allclose(rep.x_star, [1.0, 0.0, 0.0], atol=1e-9)


def test_symmetric_sharpe_tie_break():
    value, grad = sharpe_objective(np.array([0.01, 0.01]), np.diag([0.04, 0.04]))
    rep = solve_nonlinear(value, grad, ConstraintSet(2))
    np.testing.assert_allclose(rep.x_star, [0.5, 0.5], atol=1e-9)
    grid = grid_2d(1e-3)[1:]
    vals = np.array([value(x) for x in grid])
    assert rep.objective_value >= vals.max() - 1e-9


def test_projection_examples():
    c = ConstraintSet(5)
    x = np.array([0.1, 0.2, 0.0, 0.3, 0.1])
    np.testing.assert_array_equal(project_feasible(x, c), x)
    np.testing.assert_allclose(project_feasible([2, 2, 0, 0, 0], c), [0.5, 0.5, 0, 0, 0], atol=1e-12)
    cs = ConstraintSet(3, shortable_index=2)
    np.testing.assert_allclose(project_feasible([0.0, 0.0, -3.0], cs), [0.0, 0.0, -1.0], atol=1e-12)


def _slsqp_projection(y, c):
    A, b, E, e = c.linear()
    cons = [{"type": "ineq", "fun": lambda x: b - A @ x, "jac": lambda x: -A}]
    if E.shape[0]:
        cons.append({"type": "eq", "fun": lambda x: E @ x - e, "jac": lambda x: E})
    res = minimize(
        lambda x: 0.5 * np.sum((x - y) ** 2), c.feasible_point(), jac=lambda x: x - y,
        constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500},
    )
    return res.x


@pytest.mark.parametrize("mode", ["inequality", "equality"])
def test_projection_matches_qp_oracle(rng, mode):
    c = ConstraintSet(5, shortable_index=4, budget_mode=mode)
    for _ in range(30):
        y = rng.uniform(-2, 2, 5)
        np.testing.assert_allclose(project_feasible(y, c), _slsqp_projection(y, c), atol=1e-6)


@pytest.mark.parametrize("mode", ["inequality", "equality"])
def test_max_linear_matches_linprog(rng, mode):
    c = ConstraintSet(6, shortable_index=5, budget_mode=mode)
    A, b, E, e = c.linear()
    for _ in range(30):
        w = rng.standard_normal(6)
        best, x = c.max_linear(w)
        ref = linprog(-w, A_ub=A, b_ub=b, A_eq=E if E.shape[0] else None, b_eq=e if E.shape[0] else None,
                      bounds=[(None, None)] * 6, method="highs")
        assert best == pytest.approx(-ref.fun, abs=1e-10)
        assert c.is_feasible(x) and x @ w == pytest.approx(best, abs=1e-12)


def test_constraint_set_structure():
    c = ConstraintSet(8, shortable_index=7)
    assert c.is_feasible(np.r_[np.zeros(7), -1.0])
    assert not c.is_feasible(np.r_[np.zeros(7), -1.01])
    assert not c.is_feasible(np.r_[np.full(7, 1 / 7), 0.1])  # total cap
    assert c.is_feasible(np.r_[np.full(7, 1 / 7), -0.5])
    assert not ConstraintSet(2).is_feasible([-0.1, 0.5])
    np.testing.assert_array_equal(c.equal_weight(), np.full(8, 0.125))
    eq = c.with_budget_mode("equality")
    assert eq.is_feasible(eq.feasible_point())
    with pytest.raises(ValueError):
        ConstraintSet(2, budget_mode="sideways")


def test_floor_psd():
    s = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-14]])
    h, floored = floor_psd(s)
    assert floored and np.linalg.eigvalsh(h).min() >= 0
    with pytest.raises(SolverError):
        floor_psd(np.diag([1.0, -1.0]))


def test_multistart_points_feasible_and_deterministic():
    c = ConstraintSet(8, shortable_index=7)
    a = multistart_points(c, 16, 3)
    b = multistart_points(c, 16, 3)
    assert len(a) == 16 and all(c.is_feasible(p) for p in a)
    assert all(np.array_equal(p, q) for p, q in zip(a, b))
    np.testing.assert_array_equal(a[0], 0.0)
    np.testing.assert_array_equal(a[1], c.equal_weight())
    assert sum(1 for p in a[2:9] if np.count_nonzero(p) == 1) == 7


def test_nonlinear_determinism_and_kkt(rng):
    r = rng.standard_normal((60, 4)) * 0.02 + 0.001
    mu, sigma = r.mean(axis=0), np.cov(r.T)
    value, grad = sharpe_objective(mu, sigma)
    c = ConstraintSet(4, shortable_index=3)
    a = solve_nonlinear(value, grad, c, seed=5)
    b = solve_nonlinear(value, grad, c, seed=5)
    assert np.array_equal(a.x_star, b.x_star) and a.objective_value == b.objective_value
    assert c.is_feasible(a.x_star) and a.kkt_residual < 1e-6


def test_nonlinear_errors():
    c = ConstraintSet(2)
    with pytest.raises(SolverError):
        solve_nonlinear(lambda x: -np.inf, lambda x: x, c)
    with pytest.raises(SolverError):
        solve_nonlinear(lambda x: np.nan, lambda x: x, c)
    with pytest.raises(ValueError):
        solve_nonlinear(lambda x: 0.0, lambda x: x, c, sense="up")
