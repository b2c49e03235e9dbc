"""
Dense primal-dual interior-point solver for small smooth nonlinear programs.

Problems have the form::

    minimize    f(z)
    subject to  c(z) = 0,  g(z) >= 0,  lower <= z <= upper

Inequalities get slack variables, bounds are handled directly through bound multipliers
and every Newton step solves the symmetric indefinite KKT system with an inertia
correction. A log-barrier merit function with an l1 infeasibility penalty drives a
backtracking line search, and the barrier parameter decreases geometrically once the
current barrier subproblem is solved accurately enough.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionError

logger = logging.getLogger(__name__)

Vector = np.ndarray
Matrix = np.ndarray


class NlpStatus(str, Enum):
    OPTIMAL_LOCAL = "OPTIMAL_LOCAL"
    MAX_ITER = "MAX_ITER"
    INFEASIBLE_DETECTED = "INFEASIBLE_DETECTED"
    NUMERIC_FAILURE = "NUMERIC_FAILURE"


class SolverOptions(BaseModel):
    """Interior-point options. ``mu_min`` defaults to ``tol / 10``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: float = Field(1e-6, gt=0.0)
    max_iter: int = Field(200, ge=1)
    mu_init: float = Field(0.1, gt=0.0)
    mu_decrease: float = Field(0.2, gt=0.0, lt=1.0)
    mu_min: Optional[float] = None
    barrier_tol_factor: float = 10.0
    tau_min: float = 0.99
    bound_push: float = 1e-2
    armijo: float = 1e-4
    max_backtracks: int = 40
    infeasibility_patience: int = 5

    @property
    def mu_floor(self) -> float:
        return self.mu_min if self.mu_min is not None else self.tol / 10.0


@dataclass
class NlpProblem:
    """
    Smooth constrained problem with analytic first derivatives.

    ``hessian(z, y_eq, y_ineq)`` is optional and must return the Hessian of
    ``f(z) - y_eq'c(z) - y_ineq'g(z)``; without it the solver keeps a damped BFGS
    approximation.
    """

    n: int
    objective: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    x0: Vector
    lower: Optional[Vector] = None
    upper: Optional[Vector] = None
    n_eq: int = 0
    eq: Optional[Callable[[Vector], Vector]] = None
    eq_jacobian: Optional[Callable[[Vector], Matrix]] = None
    n_ineq: int = 0
    ineq: Optional[Callable[[Vector], Vector]] = None
    ineq_jacobian: Optional[Callable[[Vector], Matrix]] = None
    hessian: Optional[Callable[[Vector, Vector, Vector], Matrix]] = None
    name: str = "nlp"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.size != self.n:
            raise DimensionError(f"{self.name}: x0 has {self.x0.size} entries, expected {self.n}")
        self.lower = np.full(self.n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(self.n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.n,) or self.upper.shape != (self.n,):
            raise DimensionError(f"{self.name}: bounds must have shape ({self.n},)")
        if np.any(self.lower > self.upper):
            raise DimensionError(f"{self.name}: lower bound exceeds upper bound")
        if self.n_eq and (self.eq is None or self.eq_jacobian is None):
            raise DimensionError(f"{self.name}: {self.n_eq} equalities declared without callbacks")
        if self.n_ineq and (self.ineq is None or self.ineq_jacobian is None):
            raise DimensionError(f"{self.name}: {self.n_ineq} inequalities declared without callbacks")

    def eval_eq(self, z: Vector) -> Vector:
        return np.asarray(self.eq(z), dtype=float).reshape(-1) if self.n_eq else np.zeros(0)

    def eval_eq_jacobian(self, z: Vector) -> Matrix:
        return np.asarray(self.eq_jacobian(z), dtype=float).reshape(self.n_eq, self.n) if self.n_eq else np.zeros((0, self.n))

    def eval_ineq(self, z: Vector) -> Vector:
        return np.asarray(self.ineq(z), dtype=float).reshape(-1) if self.n_ineq else np.zeros(0)

    def eval_ineq_jacobian(self, z: Vector) -> Matrix:
        return np.asarray(self.ineq_jacobian(z), dtype=float).reshape(self.n_ineq, self.n) if self.n_ineq else np.zeros((0, self.n))

    def validate(self) -> None:
        """Check callback dimensions and finiteness at the initial guess."""
        z = self.x0
        values = {
            "objective": np.atleast_1d(float(self.objective(z))),
            "gradient": np.asarray(self.gradient(z), dtype=float),
            "eq": self.eval_eq(z),
            "eq_jacobian": self.eval_eq_jacobian(z),
            "ineq": self.eval_ineq(z),
            "ineq_jacobian": self.eval_ineq_jacobian(z),
        }
        expected = {
            "gradient": (self.n,),
            "eq": (self.n_eq,),
            "eq_jacobian": (self.n_eq, self.n),
            "ineq": (self.n_ineq,),
            "ineq_jacobian": (self.n_ineq, self.n),
        }
        for name, shape in expected.items():
            if values[name].shape != shape:
                raise DimensionError(f"{self.name}: {name} has shape {values[name].shape}, expected {shape}")
        for name, value in values.items():
            if not np.all(np.isfinite(value)):
                raise DimensionError(f"{self.name}: {name} is not finite at the initial guess")


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    complementarity: float

    @property
    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


@dataclass
class NlpSolution:
    z: Vector
    objective: float
    status: NlpStatus
    residuals: KktResiduals
    y_eq: Vector
    y_ineq: Vector
    z_lower: Vector
    z_upper: Vector
    iterations: int
    mu: float
    message: str = ""
    failed_z: Optional[Vector] = None

    @property
    def success(self) -> bool:
        return self.status == NlpStatus.OPTIMAL_LOCAL


@dataclass
class DerivativeReport:
    """Largest relative deviation of analytic derivatives from central differences."""

    gradient: float = 0.0
    eq_jacobian: float = 0.0
    ineq_jacobian: float = 0.0
    points: int = 0

    @property
    def max(self) -> float:
        return max(self.gradient, self.eq_jacobian, self.ineq_jacobian)


def kkt_residuals(
    problem: NlpProblem,
    z: Vector,
    y_eq: Vector,
    y_ineq: Vector,
    z_lower: Vector,
    z_upper: Vector,
) -> KktResiduals:
    """
    Evaluate first-order optimality of a primal-dual point directly from the problem callbacks.

    Sign violations of the inequality and bound multipliers count as complementarity error.
    """
    z = np.asarray(z, dtype=float)
    c = problem.eval_eq(z)
    g = problem.eval_ineq(z)
    grad_lagrangian = (
        np.asarray(problem.gradient(z), dtype=float)
        - problem.eval_eq_jacobian(z).T @ y_eq
        - problem.eval_ineq_jacobian(z).T @ y_ineq
        - z_lower
        + z_upper
    )
    has_lower = np.isfinite(problem.lower)
    has_upper = np.isfinite(problem.upper)

    primal_terms = [0.0]
    if c.size:
        primal_terms.append(np.max(np.abs(c)))
    if g.size:
        primal_terms.append(np.max(np.maximum(-g, 0.0)))
    if has_lower.any():
        primal_terms.append(np.max(np.maximum(problem.lower[has_lower] - z[has_lower], 0.0)))
    if has_upper.any():
        primal_terms.append(np.max(np.maximum(z[has_upper] - problem.upper[has_upper], 0.0)))

    comp_terms = [0.0]
    if g.size:
        comp_terms.append(np.max(np.abs(g * y_ineq)))
        comp_terms.append(np.max(np.maximum(-y_ineq, 0.0)))
    if has_lower.any():
        comp_terms.append(np.max(np.abs((z - problem.lower)[has_lower] * z_lower[has_lower])))
        comp_terms.append(np.max(np.maximum(-z_lower, 0.0)))
    if has_upper.any():
        comp_terms.append(np.max(np.abs((problem.upper - z)[has_upper] * z_upper[has_upper])))
        comp_terms.append(np.max(np.maximum(-z_upper, 0.0)))
    off_bound = np.concatenate([z_lower[~has_lower], z_upper[~has_upper]])
    stationarity = float(np.max(np.abs(grad_lagrangian))) if grad_lagrangian.size else 0.0
    if off_bound.size:
        stationarity = max(stationarity, float(np.max(np.abs(off_bound))))
    return KktResiduals(
        stationarity=stationarity,
        primal=float(max(primal_terms)),
        complementarity=float(max(comp_terms)),
    )


def check_derivatives(
    problem: NlpProblem,
    points: Sequence[Vector],
    step: float = 1e-6,
) -> DerivativeReport:
    """Compare analytic gradients and Jacobians with central finite differences at ``points``."""
    report = DerivativeReport()

    def relative(analytic: np.ndarray, numeric: np.ndarray) -> float:
        if analytic.size == 0:
            return 0.0
        scale = max(1.0, float(np.max(np.abs(numeric))))
        return float(np.max(np.abs(analytic - numeric))) / scale

    for point in points:
        z = np.asarray(point, dtype=float)
        grad_fd = np.zeros(problem.n)
        eq_fd = np.zeros((problem.n_eq, problem.n))
        ineq_fd = np.zeros((problem.n_ineq, problem.n))
        for i in range(problem.n):
            e = np.zeros(problem.n)
            e[i] = step
            grad_fd[i] = (problem.objective(z + e) - problem.objective(z - e)) / (2.0 * step)
            eq_fd[:, i] = (problem.eval_eq(z + e) - problem.eval_eq(z - e)) / (2.0 * step)
            ineq_fd[:, i] = (problem.eval_ineq(z + e) - problem.eval_ineq(z - e)) / (2.0 * step)
        report.gradient = max(report.gradient, relative(np.asarray(problem.gradient(z)), grad_fd))
        report.eq_jacobian = max(report.eq_jacobian, relative(problem.eval_eq_jacobian(z), eq_fd))
        report.ineq_jacobian = max(report.ineq_jacobian, relative(problem.eval_ineq_jacobian(z), ineq_fd))
        report.points += 1
    return report


class _NonFinite(Exception):
    pass


@dataclass
class _Iterate:
    z: Vector
    s: Vector
    y_eq: Vector
    y_ineq: Vector
    z_lower: Vector
    z_upper: Vector
    f: float = 0.0
    grad: Vector = field(default_factory=lambda: np.zeros(0))
    c: Vector = field(default_factory=lambda: np.zeros(0))
    g: Vector = field(default_factory=lambda: np.zeros(0))
    jac_eq: Matrix = field(default_factory=lambda: np.zeros((0, 0)))
    jac_ineq: Matrix = field(default_factory=lambda: np.zeros((0, 0)))


class InteriorPointSolver:
    """Primal-dual interior-point method on dense matrices."""

    def __init__(self, problem: NlpProblem, options: Optional[SolverOptions] = None):
        self.problem = problem
        self.options = options or SolverOptions()
        self.has_lower = np.isfinite(problem.lower)
        self.has_upper = np.isfinite(problem.upper)
        self.lower = np.where(self.has_lower, problem.lower, 0.0)
        self.upper = np.where(self.has_upper, problem.upper, 0.0)
        self.bfgs: Optional[Matrix] = None if problem.hessian is not None else np.eye(problem.n)
        self.penalty = 1.0
        self.last_delta_w = 0.0
        self.log_rows: List[dict] = []

    # evaluation -------------------------------------------------------

    def _evaluate(self, it: _Iterate, derivatives: bool = True) -> _Iterate:
        p = self.problem
        it.f = float(p.objective(it.z))
        it.c = p.eval_eq(it.z)
        it.g = p.eval_ineq(it.z)
        values = [np.atleast_1d(it.f), it.c, it.g]
        if derivatives:
            it.grad = np.asarray(p.gradient(it.z), dtype=float)
            it.jac_eq = p.eval_eq_jacobian(it.z)
            it.jac_ineq = p.eval_ineq_jacobian(it.z)
            values += [it.grad, it.jac_eq, it.jac_ineq]
        if not all(np.all(np.isfinite(value)) for value in values):
            raise _NonFinite()
        return it

    def _slack_lower(self, z: Vector) -> Vector:
        return np.where(self.has_lower, z - self.lower, 1.0)

    def _slack_upper(self, z: Vector) -> Vector:
        return np.where(self.has_upper, self.upper - z, 1.0)

    def _merit(self, it: _Iterate, mu: float) -> float:
        xl = self._slack_lower(it.z)[self.has_lower]
        xu = self._slack_upper(it.z)[self.has_upper]
        if np.any(it.s <= 0.0) or np.any(xl <= 0.0) or np.any(xu <= 0.0):
            return np.inf
        barrier = it.f - mu * (np.sum(np.log(it.s)) + np.sum(np.log(xl)) + np.sum(np.log(xu)))
        return barrier + self.penalty * self._infeasibility_l1(it)

    @staticmethod
    def _infeasibility_l1(it: _Iterate) -> float:
        return float(np.sum(np.abs(it.c)) + np.sum(np.abs(it.g - it.s)))

    def _grad_lagrangian(self, it: _Iterate) -> Vector:
        return it.grad - it.jac_eq.T @ it.y_eq - it.jac_ineq.T @ it.y_ineq - it.z_lower + it.z_upper

    def _residuals(self, it: _Iterate) -> KktResiduals:
        """Optimality of ``it`` from the values cached during the iteration."""
        stationarity = float(np.max(np.abs(self._grad_lagrangian(it)), initial=0.0))
        free = np.concatenate([it.z_lower[~self.has_lower], it.z_upper[~self.has_upper]])
        stationarity = max(stationarity, float(np.max(np.abs(free), initial=0.0)))
        xl = self._slack_lower(it.z)[self.has_lower]
        xu = self._slack_upper(it.z)[self.has_upper]
        zl = it.z_lower[self.has_lower]
        zu = it.z_upper[self.has_upper]
        primal = max(
            float(np.max(np.abs(it.c), initial=0.0)),
            float(np.max(-it.g, initial=0.0)),
            float(np.max(-xl, initial=0.0)),
            float(np.max(-xu, initial=0.0)),
        )
        complementarity = max(
            float(np.max(np.abs(it.g * it.y_ineq), initial=0.0)),
            float(np.max(-it.y_ineq, initial=0.0)),
            float(np.max(np.abs(xl * zl), initial=0.0)),
            float(np.max(-zl, initial=0.0)),
            float(np.max(np.abs(xu * zu), initial=0.0)),
            float(np.max(-zu, initial=0.0)),
        )
        return KktResiduals(stationarity=stationarity, primal=primal, complementarity=complementarity)

    def _barrier_error(self, it: _Iterate, mu: float) -> float:
        terms = [np.max(np.abs(self._grad_lagrangian(it))) if self.problem.n else 0.0]
        if it.c.size:
            terms.append(np.max(np.abs(it.c)))
        if it.s.size:
            terms.append(np.max(np.abs(it.g - it.s)))
            terms.append(np.max(np.abs(it.s * it.y_ineq - mu)))
        if self.has_lower.any():
            terms.append(np.max(np.abs(self._slack_lower(it.z)[self.has_lower] * it.z_lower[self.has_lower] - mu)))
        if self.has_upper.any():
            terms.append(np.max(np.abs(self._slack_upper(it.z)[self.has_upper] * it.z_upper[self.has_upper] - mu)))
        return float(max(terms))

    # initialization ---------------------------------------------------

    def _push_inside(self, z: Vector, push: float) -> Vector:
        z = z.copy()
        lower, upper = self.problem.lower, self.problem.upper
        width = np.where(self.has_lower & self.has_upper, upper - lower, np.inf)
        margin_l = np.minimum(push * np.maximum(1.0, np.abs(self.lower)), 0.5 * width)
        margin_u = np.minimum(push * np.maximum(1.0, np.abs(self.upper)), 0.5 * width)
        z = np.where(self.has_lower, np.maximum(z, lower + margin_l), z)
        z = np.where(self.has_upper, np.minimum(z, upper - margin_u), z)
        return z

    def _initial_iterate(self, warm_start: Optional[NlpSolution]) -> tuple:
        p, o = self.problem, self.options
        if warm_start is not None:
            mu = max(o.mu_floor, min(o.mu_init, max(warm_start.residuals.complementarity, o.mu_floor)))
            push = min(o.bound_push, mu)
            z0 = np.asarray(warm_start.z, dtype=float)
        else:
            mu = o.mu_init
            push = o.bound_push
            z0 = p.x0
        z = self._push_inside(z0, push)
        it = _Iterate(
            z=z,
            s=np.zeros(p.n_ineq),
            y_eq=np.zeros(p.n_eq),
            y_ineq=np.zeros(p.n_ineq),
            z_lower=np.zeros(p.n),
            z_upper=np.zeros(p.n),
        )
        self._evaluate(it)
        it.s = np.maximum(it.g, push)
        xl = self._slack_lower(z)
        xu = self._slack_upper(z)
        if warm_start is not None:
            it.y_eq = np.asarray(warm_start.y_eq, dtype=float).copy()
            it.y_ineq = np.maximum(np.asarray(warm_start.y_ineq, dtype=float), mu / it.s * 1e-3) if p.n_ineq else it.y_ineq
            it.z_lower = np.where(self.has_lower, np.maximum(warm_start.z_lower, mu / xl * 1e-3), 0.0)
            it.z_upper = np.where(self.has_upper, np.maximum(warm_start.z_upper, mu / xu * 1e-3), 0.0)
        else:
            it.y_ineq = mu / it.s
            it.z_lower = np.where(self.has_lower, mu / xl, 0.0)
            it.z_upper = np.where(self.has_upper, mu / xu, 0.0)
            if p.n_eq:
                residual = it.grad - it.jac_ineq.T @ it.y_ineq - it.z_lower + it.z_upper
                estimate, *_ = np.linalg.lstsq(it.jac_eq.T, residual, rcond=None)
                if np.all(np.isfinite(estimate)) and np.max(np.abs(estimate)) < 1e3:
                    it.y_eq = estimate
        return it, mu

    # linear algebra ---------------------------------------------------

    def _hessian(self, it: _Iterate) -> Matrix:
        if self.problem.hessian is not None:
            H = np.asarray(self.problem.hessian(it.z, it.y_eq, it.y_ineq), dtype=float)
            if H.shape != (self.problem.n, self.problem.n) or not np.all(np.isfinite(H)):
                raise _NonFinite()
            return 0.5 * (H + H.T)
        return self.bfgs

    def _solve_kkt(self, W: Matrix, J: Matrix, rhs_z: Vector, rhs_c: Vector, mu: float) -> tuple:
        """Solve the saddle-point system, adding ``delta_w I`` until its inertia is (n, m, 0)."""
        n, m = W.shape[0], J.shape[0]
        delta_w = 0.0
        delta_c = 0.0
        rhs = np.concatenate([rhs_z, rhs_c])
        for _ in range(60):
            K = np.zeros((n + m, n + m))
            K[:n, :n] = W + delta_w * np.eye(n)
            K[:n, n:] = J.T
            K[n:, :n] = J
            K[n:, n:] = -delta_c * np.eye(m)
            positive, negative, zero = _inertia(K)
            if positive == n and negative == m and zero == 0:
                try:
                    solution = scipy.linalg.solve(K, rhs, assume_a="sym")
                except (np.linalg.LinAlgError, ValueError):
                    solution = None
                if solution is not None and np.all(np.isfinite(solution)):
                    self.last_delta_w = delta_w
                    return solution[:n], solution[n:]
            if zero > 0 and m > 0 and delta_c == 0.0:
                delta_c = 1e-8 * mu ** 0.25
                continue
            if delta_w == 0.0:
                delta_w = 1e-4 if self.last_delta_w == 0.0 else max(1e-20, self.last_delta_w / 3.0)
            else:
                delta_w *= 8.0 if self.last_delta_w else 100.0
            if delta_w > 1e40:
                break
        raise _NonFinite()

    # main loop --------------------------------------------------------

    def solve(self, warm_start: Optional[NlpSolution] = None) -> NlpSolution:
        p, o = self.problem, self.options
        try:
            it, mu = self._initial_iterate(warm_start)
        except _NonFinite:
            return self._finish(None, NlpStatus.NUMERIC_FAILURE, 0, o.mu_init, "non-finite callback at the initial point",
                                failed_z=p.x0)

        best = it
        best_error = np.inf
        stall = 0
        ls_failures = 0
        alpha_p = alpha_d = 0.0
        for iteration in range(o.max_iter + 1):
            residuals = self._residuals(it)
            self._log(iteration, it, mu, residuals, alpha_p, alpha_d)
            if residuals.max < best_error:
                best, best_error = it, residuals.max
            if residuals.max <= o.tol:
                return self._finish(it, NlpStatus.OPTIMAL_LOCAL, iteration, mu, "converged")
            if iteration == o.max_iter:
                break

            theta = self._true_infeasibility(it)
            if theta > 1e2 * o.tol and self._infeasibility_stationary(it, theta):
                stall += 1
                if stall >= o.infeasibility_patience:
                    return self._finish(it, NlpStatus.INFEASIBLE_DETECTED, iteration, mu, "infeasibility is locally stationary")
            else:
                stall = 0

            while mu > o.mu_floor and self._barrier_error(it, mu) <= o.barrier_tol_factor * mu:
                mu = max(o.mu_floor, o.mu_decrease * mu)

            try:
                it, alpha_p, alpha_d, accepted = self._step(it, mu)
            except _NonFinite:
                return self._finish(best, NlpStatus.NUMERIC_FAILURE, iteration, mu, "non-finite values or singular KKT system",
                                    failed_z=it.z)
            ls_failures = 0 if accepted else ls_failures + 1
            if ls_failures >= o.infeasibility_patience:
                status = NlpStatus.INFEASIBLE_DETECTED if self._true_infeasibility(it) > np.sqrt(o.tol) else NlpStatus.NUMERIC_FAILURE
                return self._finish(it, status, iteration + 1, mu, "line search failed repeatedly")
            if max(np.max(np.abs(it.y_eq), initial=0.0), np.max(np.abs(it.y_ineq), initial=0.0)) > 1e12:
                return self._finish(it, NlpStatus.INFEASIBLE_DETECTED, iteration + 1, mu, "multipliers diverged")

        return self._finish(best, NlpStatus.MAX_ITER, o.max_iter, mu, "iteration limit reached")

    def _true_infeasibility(self, it: _Iterate) -> float:
        terms = [0.0]
        if it.c.size:
            terms.append(np.max(np.abs(it.c)))
        if it.g.size:
            terms.append(np.max(np.maximum(-it.g, 0.0)))
        return float(max(terms))

    def _infeasibility_stationary(self, it: _Iterate, theta: float) -> bool:
        direction = it.jac_eq.T @ it.c + it.jac_ineq.T @ np.minimum(it.g, 0.0)
        return float(np.max(np.abs(direction), initial=0.0)) <= 1e-6 * max(1.0, theta)

    def _step(self, it: _Iterate, mu: float) -> tuple:
        p, o = self.problem, self.options
        xl = self._slack_lower(it.z)
        xu = self._slack_upper(it.z)
        sigma_s = it.y_ineq / it.s if p.n_ineq else np.zeros(0)
        sigma_l = np.where(self.has_lower, it.z_lower / xl, 0.0)
        sigma_u = np.where(self.has_upper, it.z_upper / xu, 0.0)
        mu_l = np.where(self.has_lower, mu / xl, 0.0)
        mu_u = np.where(self.has_upper, mu / xu, 0.0)
        r_ineq = it.g - it.s

        H = self._hessian(it)
        W = H + it.jac_ineq.T @ (sigma_s[:, None] * it.jac_ineq) + np.diag(sigma_l + sigma_u)
        rhs = -it.grad + it.jac_eq.T @ it.y_eq + mu_l - mu_u
        if p.n_ineq:
            rhs = rhs + it.jac_ineq.T @ (mu / it.s - sigma_s * r_ineq)
        dz, w = self._solve_kkt(W, it.jac_eq, rhs, -it.c, mu)
        dy_eq = -w
        ds = it.jac_ineq @ dz + r_ineq
        dy_ineq = mu / it.s - it.y_ineq - sigma_s * ds if p.n_ineq else np.zeros(0)
        dz_lower = np.where(self.has_lower, mu_l - it.z_lower - sigma_l * dz, 0.0)
        dz_upper = np.where(self.has_upper, mu_u - it.z_upper + sigma_u * dz, 0.0)

        tau = max(o.tau_min, 1.0 - mu)
        alpha_max = min(
            _fraction_to_boundary(it.s, ds, tau),
            _fraction_to_boundary(xl[self.has_lower], dz[self.has_lower], tau),
            _fraction_to_boundary(xu[self.has_upper], -dz[self.has_upper], tau),
        )
        alpha_dual = min(
            _fraction_to_boundary(it.y_ineq, dy_ineq, tau),
            _fraction_to_boundary(it.z_lower[self.has_lower], dz_lower[self.has_lower], tau),
            _fraction_to_boundary(it.z_upper[self.has_upper], dz_upper[self.has_upper], tau),
        )

        theta = self._infeasibility_l1(it)
        barrier_slope = float(
            it.grad @ dz
            - mu * np.sum(ds / it.s)
            - mu * np.sum(dz[self.has_lower] / xl[self.has_lower])
            + mu * np.sum(dz[self.has_upper] / xu[self.has_upper])
        )
        if theta > 0.0:
            curvature = max(float(dz @ W @ dz), 0.0)
            needed = (barrier_slope + 0.5 * curvature) / (0.9 * theta)
            multipliers = np.concatenate([it.y_eq + dy_eq, it.y_ineq + dy_ineq])
            floor = float(np.max(np.abs(multipliers))) if multipliers.size else 0.0
            self.penalty = max(self.penalty, needed + 1e-4, floor)
        slope = barrier_slope - self.penalty * theta

        merit0 = self._merit(it, mu)
        alpha = alpha_max
        accepted = False
        trial = it
        for _ in range(o.max_backtracks):
            trial = _Iterate(
                z=it.z + alpha * dz,
                s=it.s + alpha * ds,
                y_eq=it.y_eq + alpha * dy_eq,
                y_ineq=it.y_ineq + alpha_dual * dy_ineq,
                z_lower=it.z_lower + alpha_dual * dz_lower,
                z_upper=it.z_upper + alpha_dual * dz_upper,
            )
            try:
                self._evaluate(trial, derivatives=False)
                merit = self._merit(trial, mu)
            except _NonFinite:
                merit = np.inf
            if np.isfinite(merit) and merit <= merit0 + o.armijo * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            logger.debug("%s: line search failed, taking alpha=%.3e", p.name, alpha)
            trial = _Iterate(
                z=it.z + alpha * dz,
                s=it.s + alpha * ds,
                y_eq=it.y_eq + alpha * dy_eq,
                y_ineq=it.y_ineq + alpha_dual * dy_ineq,
                z_lower=it.z_lower + alpha_dual * dz_lower,
                z_upper=it.z_upper + alpha_dual * dz_upper,
            )
        self._evaluate(trial)
        self._reset_bound_duals(trial, mu)
        if self.bfgs is not None:
            self._update_bfgs(it, trial)
        return trial, alpha, alpha_dual, accepted

    def _reset_bound_duals(self, it: _Iterate, mu: float, kappa: float = 1e10) -> None:
        if self.problem.n_ineq:
            it.y_ineq = np.clip(it.y_ineq, mu / (kappa * it.s), kappa * mu / it.s)
        xl = self._slack_lower(it.z)
        xu = self._slack_upper(it.z)
        it.z_lower = np.where(self.has_lower, np.clip(it.z_lower, mu / (kappa * xl), kappa * mu / xl), 0.0)
        it.z_upper = np.where(self.has_upper, np.clip(it.z_upper, mu / (kappa * xu), kappa * mu / xu), 0.0)

    def _update_bfgs(self, old: _Iterate, new: _Iterate) -> None:
        step = new.z - old.z
        grad_new = new.grad - new.jac_eq.T @ new.y_eq - new.jac_ineq.T @ new.y_ineq
        grad_old = old.grad - old.jac_eq.T @ new.y_eq - old.jac_ineq.T @ new.y_ineq
        change = grad_new - grad_old
        B = self.bfgs
        Bs = B @ step
        sBs = float(step @ Bs)
        if sBs <= 1e-16:
            return
        sy = float(step @ change)
        # Powell damping keeps the update positive definite
        if sy < 0.2 * sBs:
            theta = 0.8 * sBs / (sBs - sy)
            change = theta * change + (1.0 - theta) * Bs
            sy = float(step @ change)
        self.bfgs = B - np.outer(Bs, Bs) / sBs + np.outer(change, change) / sy

    # results ----------------------------------------------------------

    def _finish(
        self,
        it: Optional[_Iterate],
        status: NlpStatus,
        iterations: int,
        mu: float,
        message: str,
        failed_z: Optional[Vector] = None,
    ) -> NlpSolution:
        p = self.problem
        failed = None if failed_z is None else np.asarray(failed_z, dtype=float).copy()
        if it is None:
            z = p.x0.copy()
            nan = KktResiduals(np.inf, np.inf, np.inf)
            logger.debug("%s: %s (%s)", p.name, status.value, message)
            return NlpSolution(
                z=z, objective=np.nan, status=status, residuals=nan,
                y_eq=np.zeros(p.n_eq), y_ineq=np.zeros(p.n_ineq),
                z_lower=np.zeros(p.n), z_upper=np.zeros(p.n),
                iterations=iterations, mu=mu, message=message, failed_z=failed,
            )
        # re-evaluate the callbacks instead of trusting the cached iterate
        residuals = kkt_residuals(p, it.z, it.y_eq, it.y_ineq, it.z_lower, it.z_upper)
        if not all(np.isfinite([residuals.stationarity, residuals.primal, residuals.complementarity])):
            residuals = KktResiduals(np.inf, np.inf, np.inf)
        if status == NlpStatus.OPTIMAL_LOCAL and residuals.max > self.options.tol:
            logger.debug("%s: independent KKT check rejected convergence (%.2e)", p.name, residuals.max)
            status = NlpStatus.MAX_ITER
            message = "independent KKT check failed"
        logger.debug(
            "%s: %s after %d iterations, f=%.6g, residuals=(%.2e, %.2e, %.2e)",
            p.name, status.value, iterations, it.f,
            residuals.stationarity, residuals.primal, residuals.complementarity,
        )
        return NlpSolution(
            z=it.z.copy(), objective=it.f, status=status, residuals=residuals,
            y_eq=it.y_eq.copy(), y_ineq=it.y_ineq.copy(),
            z_lower=it.z_lower.copy(), z_upper=it.z_upper.copy(),
            iterations=iterations, mu=mu, message=message, failed_z=failed,
        )

    def _log(self, iteration: int, it: _Iterate, mu: float, residuals: KktResiduals, alpha_p: float, alpha_d: float) -> None:
        self.log_rows.append({
            "iteration": iteration,
            "objective": it.f,
            "mu": mu,
            "stationarity": residuals.stationarity,
            "primal": residuals.primal,
            "complementarity": residuals.complementarity,
            "alpha_primal": alpha_p,
            "alpha_dual": alpha_d,
            "delta_w": self.last_delta_w,
        })

    def write_log(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=ITERATION_LOG_COLUMNS)
            writer.writeheader()
            writer.writerows(self.log_rows)
        return path


ITERATION_LOG_COLUMNS = (
    "iteration", "objective", "mu", "stationarity", "primal", "complementarity",
    "alpha_primal", "alpha_dual", "delta_w",
)


def _fraction_to_boundary(value: Vector, step: Vector, tau: float) -> float:
    """Largest alpha in (0, 1] keeping ``value + alpha * step >= (1 - tau) * value``."""
    if value.size == 0:
        return 1.0
    shrinking = step < 0.0
    if not shrinking.any():
        return 1.0
    return float(min(1.0, np.min(-tau * value[shrinking] / step[shrinking])))


def _inertia(K: Matrix, zero_tol: float = 1e-12) -> tuple:
    """Counts of positive, negative and zero eigenvalues from an LDL' factorization."""
    _, D, _ = scipy.linalg.ldl(K)
    positive = negative = zero = 0
    i = 0
    size = D.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(D)))) if size else 1.0)
    while i < size:
        if i + 1 < size and D[i + 1, i] != 0.0:
            eigenvalues = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            i += 2
        else:
            eigenvalues = np.array([D[i, i]])
            i += 1
        for value in eigenvalues:
            if abs(value) <= zero_tol * scale:
                zero += 1
            elif value > 0.0:
                positive += 1
            else:
                negative += 1
    return positive, negative, zero


def solve(
    problem: NlpProblem,
    options: Optional[SolverOptions] = None,
    warm_start: Optional[NlpSolution] = None,
    log_path: Optional[Path] = None,
) -> NlpSolution:
    """
    Solve ``problem`` with the interior-point method.

    Args:
        problem: Problem definition with analytic first derivatives.
        options: Solver options; defaults to ``SolverOptions()``.
        warm_start: Previous solution of the same (or a shifted) problem whose primal and
            dual values seed the iteration with a small barrier parameter.
        log_path: When given, per-iteration objective and residuals are written there as CSV.

    Returns:
        The best iterate found with its status and independently evaluated KKT residuals.
    """
    solver = InteriorPointSolver(problem, options)
    solution = solver.solve(warm_start=warm_start)
    if log_path is not None:
        solver.write_log(log_path)
    return solution
