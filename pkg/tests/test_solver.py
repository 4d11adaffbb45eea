import numpy as np
import pytest

from slope_recovery.src.errors import (DimensionError, DomainError,
                                       InvalidDesign, NotConverged)
from slope_recovery.src.pattern import SlopePattern, patt_with_tol
from slope_recovery.src.solver import (Problem, SolverOptions, is_orthogonal,
                                       kkt_residual, lipschitz_constant,
                                       locate_breakpoints, objective,
                                       solution_path, solve, solve_lasso,
                                       solve_orthogonal)
from slope_recovery.src.sorted_l1 import (TuningSequence, prox_sorted_l1,
                                          subdiff_membership)

from conftest import random_orthogonal


def test_solver_options_from_dict():
    opts = SolverOptions.from_dict({"max_iter": "100", "rel_tol": "1e-8", "polish": 0, "other": 1})
    assert opts.max_iter == 100
    assert opts.rel_tol == 1e-8
    assert opts.polish is False


def test_problem_checks_dimensions(two_var_X, lam_42):
    with pytest.raises(DimensionError):
        Problem(two_var_X, np.zeros(3), lam_42)
    with pytest.raises(DimensionError):
        Problem(two_var_X, np.zeros(2), TuningSequence([3.0, 2.0, 1.0]))
    prob = Problem(two_var_X, np.zeros(2), lam_42, alpha=0.5)
    np.testing.assert_allclose(prob.penalty, [2.0, 1.0])


def test_lipschitz_constant(rng):
    X = rng.standard_normal((20, 5))
    exact = np.linalg.norm(X, 2) ** 2
    L = lipschitz_constant(X)
    assert exact <= L <= 1.02 * exact


def test_zero_response_gives_zero(two_var_X, lam_42):
    result = solve(Problem(two_var_X, np.zeros(2), lam_42, 1.0))
    np.testing.assert_array_equal(result.beta_hat, [0.0, 0.0])
    assert result.converged
    assert result.pattern.is_zero


def test_two_var_instance_recovers_pattern(two_var_X, lam_42, beta_bar):
    Y = two_var_X @ beta_bar
    result = solve(Problem(two_var_X, Y, lam_42, 0.2))
    assert result.pattern == SlopePattern((2, 1))
    np.testing.assert_allclose(result.beta_hat, [4.125, 3.125], atol=1e-6)


def test_orthogonal_design_matches_prox(rng):
    for seed in range(5):
        X = random_orthogonal(30, 12, seed)
        Y = rng.standard_normal(30) * 3.0
        tuning = TuningSequence(np.linspace(2.0, 0.5, 12))
        fitted = solve(Problem(X, Y, tuning, 1.0)).beta_hat
        np.testing.assert_allclose(fitted, prox_sorted_l1(X.T @ Y, tuning.lambdas), atol=1e-8)
        closed = solve_orthogonal(X, Y, tuning)
        np.testing.assert_allclose(closed.beta_hat, prox_sorted_l1(X.T @ Y, tuning.lambdas))
        assert is_orthogonal(X)


def test_solve_orthogonal_rejects_general_design(two_var_X, lam_42):
    assert not is_orthogonal(two_var_X)
    with pytest.raises(InvalidDesign):
        solve_orthogonal(two_var_X, np.ones(2), lam_42)


def test_lasso_examples(rng):
    np.testing.assert_allclose(solve_lasso(np.array([[1.0]]), np.array([5.0]), 2.0).beta_hat, [3.0])
    np.testing.assert_array_equal(solve_lasso(np.eye(3), np.zeros(3), 1.0).beta_hat, np.zeros(3))
    X = random_orthogonal(10, 4, 3)
    Y = rng.standard_normal(10) * 2.0
    z = X.T @ Y
    expected = np.sign(z) * np.maximum(np.abs(z) - 0.7, 0.0)
    np.testing.assert_allclose(solve_lasso(X, Y, 0.7).beta_hat, expected, atol=1e-8)
    with pytest.raises(DomainError):
        solve_lasso(X, Y, 0.0)


def test_lasso_equals_constant_slope(rng):
    X = rng.standard_normal((15, 6))
    Y = X @ np.array([2.0, -1.0, 0.0, 0.0, 1.5, 0.0]) + 0.3 * rng.standard_normal(15)
    lasso = solve_lasso(X, Y, 1.2).beta_hat
    slope = solve(Problem(X, Y, TuningSequence(np.full(6, 1.2)))).beta_hat
    np.testing.assert_allclose(lasso, slope, atol=1e-8)


def test_kkt_certificate_on_converged_results(rng, tol):
    for _ in range(20):
        n, p = 12, 6
        X = rng.standard_normal((n, p))
        Y = X @ rng.integers(-3, 4, p).astype(float) + 0.5 * rng.standard_normal(n)
        tuning = TuningSequence(np.linspace(3.0, 0.5, p))
        result = solve(Problem(X, Y, tuning, 1.0), tol=tol)
        assert result.converged
        g = X.T @ (Y - X @ result.beta_hat)
        M = patt_with_tol(result.beta_hat, tol.pattern_tol)
        slack = 1e-6 * (1.0 + np.max(np.abs(X.T @ Y)))
        assert subdiff_membership(g, M, tuning.lambdas, tol, slack=slack).result
        assert result.kkt_residual == pytest.approx(kkt_residual(X, Y, result.beta_hat, tuning.lambdas, tol))
        assert result.objective <= objective(X, Y, np.zeros(p), tuning.lambdas) + 1e-9
        ols = np.linalg.lstsq(X, Y, rcond=None)[0]
        assert result.objective <= objective(X, Y, ols, tuning.lambdas) + 1e-9


def test_not_converged_carries_last_iterate(rng):
    X = rng.standard_normal((10, 8))
    Y = rng.standard_normal(10)
    opts = SolverOptions(max_iter=2, check_every=1, polish=False)
    with pytest.raises(NotConverged) as info:
        solve(Problem(X, Y, TuningSequence(np.linspace(0.2, 0.1, 8))), opts)
    assert info.value.last_iterate.shape == (8,)
    assert info.value.iterations == 2


def test_path_two_var_failing_instance(two_var_X, lam_42, beta_fail):
    Y = two_var_X @ beta_fail
    alphas = np.array([0.2, 0.5, 0.9, 1.1, 1.3, 1.4, 2.0, 5.0])
    patterns = [str(point.pattern) for point in solution_path(two_var_X, Y, lam_42, alphas)]
    assert patterns == ["2,1", "2,1", "2,1", "1,1", "1,1", "0,0", "0,0", "0,0"]


def test_path_two_var_recovering_instance(two_var_X, lam_42, beta_bar):
    Y = two_var_X @ beta_bar
    path = solution_path(two_var_X, Y, lam_42, [0.05, 0.1, 0.2, 0.3, 0.39])
    assert all(point.pattern == SlopePattern((2, 1)) for point in path)


def test_path_rejects_bad_grid(two_var_X, lam_42):
    with pytest.raises(DomainError):
        solution_path(two_var_X, np.ones(2), lam_42, [0.5, 0.2])
    with pytest.raises(DomainError):
        solution_path(two_var_X, np.ones(2), lam_42, [0.0, 0.2])


def test_zero_pattern_persists_along_path(rng):
    X = rng.standard_normal((10, 4))
    Y = rng.standard_normal(10)
    path = solution_path(X, Y, TuningSequence([2.0, 1.5, 1.0, 0.5]), np.linspace(0.1, 10.0, 25))
    seen_zero = False
    for point in path:
        seen_zero = seen_zero or point.pattern.is_zero
        if seen_zero:
            assert point.pattern.is_zero


def test_breakpoints_two_var(two_var_X, lam_42, beta_fail):
    Y = two_var_X @ beta_fail
    path = solution_path(two_var_X, Y, lam_42, np.linspace(0.1, 2.0, 20))
    found = locate_breakpoints(two_var_X, Y, lam_42, path)
    assert [(str(bp.pattern_before), str(bp.pattern_after)) for bp in found] == [("2,1", "1,1"), ("1,1", "0,0")]
    assert found[0].alpha == pytest.approx(1.0, abs=1e-3)
    assert found[1].alpha == pytest.approx(4.0 / 3.0, abs=1e-3)
