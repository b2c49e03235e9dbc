"""
Tests for the interior-point solver.
"""
import csv
from unittest.mock import patch

import numpy as np
import pytest

from cooplane.errors import DimensionError
from cooplane.nlp import (
    ITERATION_LOG_COLUMNS,
    InteriorPointSolver,
    KktResiduals,
    NlpProblem,
    NlpStatus,
    SolverOptions,
    check_derivatives,
    kkt_residuals,
    solve,
)


def _rosenbrock(hessian=True):
    def objective(z):
        return (1.0 - z[0]) ** 2 + 100.0 * (z[1] - z[0] ** 2) ** 2

    def gradient(z):
        return np.array([
            -2.0 * (1.0 - z[0]) - 400.0 * z[0] * (z[1] - z[0] ** 2),
            200.0 * (z[1] - z[0] ** 2),
        ])

    def exact_hessian(z, y_eq, y_ineq):
        return np.array([
            [2.0 - 400.0 * z[1] + 1200.0 * z[0] ** 2, -400.0 * z[0]],
            [-400.0 * z[0], 200.0],
        ])

    return NlpProblem(n=2, objective=objective, gradient=gradient, x0=[-1.2, 1.0],
                      hessian=exact_hessian if hessian else None, name="rosenbrock")


def _equality_qp():
    return NlpProblem(
        n=2,
        objective=lambda z: float(z @ z),
        gradient=lambda z: 2.0 * z,
        x0=[3.0, -1.0],
        n_eq=1,
        eq=lambda z: np.array([z[0] + z[1] - 1.0]),
        eq_jacobian=lambda z: np.array([[1.0, 1.0]]),
    )


def test_active_lower_bound():
    """The unconstrained minimum lies below the bound, so the bound becomes active."""
    problem = NlpProblem(
        n=1,
        objective=lambda z: float((z[0] - 3.0) ** 2),
        gradient=lambda z: np.array([2.0 * (z[0] - 3.0)]),
        x0=[6.0],
        lower=[5.0],
    )
    solution = solve(problem)
    assert solution.status == NlpStatus.OPTIMAL_LOCAL
    assert solution.z[0] == pytest.approx(5.0, abs=1e-5)
    assert solution.z_lower[0] == pytest.approx(4.0, abs=1e-4)


def test_equality_constrained_qp():
    solution = solve(_equality_qp())
    assert solution.success
    assert solution.z == pytest.approx([0.5, 0.5], abs=1e-6)
    assert solution.y_eq[0] == pytest.approx(1.0, abs=1e-5)
    assert solution.residuals.max <= 1e-6


def test_inequality_constrained_qp():
    """Projection of (2, 2) onto the half plane z1 + z2 <= 2."""
    problem = NlpProblem(
        n=2,
        objective=lambda z: float(np.sum((z - 2.0) ** 2)),
        gradient=lambda z: 2.0 * (z - 2.0),
        x0=[0.0, 0.0],
        n_ineq=1,
        ineq=lambda z: np.array([2.0 - z[0] - z[1]]),
        ineq_jacobian=lambda z: np.array([[-1.0, -1.0]]),
    )
    solution = solve(problem)
    assert solution.success
    assert solution.z == pytest.approx([1.0, 1.0], abs=1e-5)
    assert solution.y_ineq[0] == pytest.approx(2.0, abs=1e-4)


def test_rosenbrock_with_exact_hessian():
    solution = solve(_rosenbrock())
    assert solution.success
    assert solution.z == pytest.approx([1.0, 1.0], abs=1e-5)
    assert solution.objective == pytest.approx(0.0, abs=1e-8)


def test_iteration_limit():
    solution = solve(_rosenbrock(), SolverOptions(max_iter=2))
    assert solution.status == NlpStatus.MAX_ITER
    assert not solution.success
    assert solution.iterations == 2


def test_infeasible_problem_is_not_reported_optimal():
    """z >= 1 and z <= 0 cannot both hold."""
    problem = NlpProblem(
        n=1,
        objective=lambda z: float(z[0] ** 2),
        gradient=lambda z: np.array([2.0 * z[0]]),
        x0=[0.5],
        n_ineq=2,
        ineq=lambda z: np.array([z[0] - 1.0, -z[0]]),
        ineq_jacobian=lambda z: np.array([[1.0], [-1.0]]),
    )
    solution = solve(problem, SolverOptions(max_iter=50))
    assert solution.status != NlpStatus.OPTIMAL_LOCAL
    assert solution.residuals.primal > 0.1


def test_warm_start_needs_no_more_iterations():
    cold = solve(_equality_qp())
    warm = solve(_equality_qp(), warm_start=cold)
    assert warm.success
    assert warm.iterations <= cold.iterations


def test_iteration_log(tmp_path):
    """Per-iteration residuals are written as CSV."""
    path = tmp_path / "logs" / "iterations.csv"
    solution = solve(_equality_qp(), log_path=path)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert tuple(rows[0].keys()) == ITERATION_LOG_COLUMNS
    assert len(rows) == solution.iterations + 1


def test_kkt_residuals_at_known_optimum():
    residuals = kkt_residuals(_equality_qp(), np.array([0.5, 0.5]), np.array([1.0]), np.zeros(0),
                              np.zeros(2), np.zeros(2))
    assert residuals.max == pytest.approx(0.0, abs=1e-12)


def test_check_derivatives():
    """Analytic derivatives agree with central differences; a wrong gradient is caught."""
    problem = _rosenbrock()
    points = [np.array([-1.2, 1.0]), np.array([0.3, -0.4])]
    assert check_derivatives(problem, points).max < 1e-5
    broken = NlpProblem(n=2, objective=problem.objective, gradient=lambda z: np.zeros(2), x0=[-1.2, 1.0])
    report = check_derivatives(broken, points)
    assert report.gradient > 0.1
    assert report.points == 2


def test_problem_dimension_checks():
    with pytest.raises(DimensionError):
        NlpProblem(n=2, objective=lambda z: 0.0, gradient=lambda z: np.zeros(2), x0=[0.0])
    with pytest.raises(DimensionError):
        NlpProblem(n=1, objective=lambda z: 0.0, gradient=lambda z: np.zeros(1), x0=[0.0], n_eq=1)
    with pytest.raises(DimensionError):
        NlpProblem(n=1, objective=lambda z: 0.0, gradient=lambda z: np.zeros(1), x0=[0.0], lower=[1.0], upper=[0.0])


def test_validate_catches_wrong_gradient_shape():
    problem = NlpProblem(n=2, objective=lambda z: 0.0, gradient=lambda z: np.zeros(3), x0=[0.0, 0.0])
    with pytest.raises(DimensionError):
        problem.validate()


def test_convergence_is_rechecked_against_the_callbacks():
    """A stale convergence test is overruled by re-evaluating the problem at the returned point."""
    with patch.object(InteriorPointSolver, "_residuals", return_value=KktResiduals(0.0, 0.0, 0.0)):
        solution = solve(_equality_qp())
    assert solution.status == NlpStatus.MAX_ITER
    assert not solution.success
    assert solution.iterations == 0
    assert solution.residuals.max > SolverOptions().tol
    assert "independent" in solution.message


def test_numeric_failure_keeps_the_failing_iterate():
    """A Hessian that turns non-finite mid-solve is reported with the point it failed at."""
    def hessian(z, y_eq, y_ineq):
        return np.array([[4.0]]) if z[0] < 0.5 else np.array([[np.nan]])

    problem = NlpProblem(
        n=1,
        objective=lambda z: float((z[0] - 2.0) ** 2),
        gradient=lambda z: np.array([2.0 * (z[0] - 2.0)]),
        x0=[0.0],
        hessian=hessian,
    )
    solution = solve(problem)
    assert solution.status == NlpStatus.NUMERIC_FAILURE
    assert solution.failed_z == pytest.approx([1.0])
    assert "non-finite" in solution.message


def test_numeric_failure_at_the_initial_point():
    problem = NlpProblem(
        n=2,
        objective=lambda z: float("nan"),
        gradient=lambda z: np.zeros(2),
        x0=[0.5, -0.5],
    )
    solution = solve(problem)
    assert solution.status == NlpStatus.NUMERIC_FAILURE
    assert np.array_equal(solution.failed_z, [0.5, -0.5])
    assert solution.iterations == 0


def test_converged_solution_has_no_failed_iterate():
    assert solve(_equality_qp()).failed_z is None
