"""
Receding-horizon trajectory planner.

The ego follows a kinematic bicycle model. States are eliminated by single shooting from
the fixed initial state, so the decision variables are the controls plus, for every
nearby obstacle and horizon step, a dual separation certificate ``(lam, mu, rho)``.
Collision avoidance is enforced through the smooth dual conditions::

    -b_ego'lam - b_obs'mu >= d_min,  A_ego'lam + rho = 0,  A_obs'mu - rho = 0,
    |rho| <= 1,  lam >= 0,  mu >= 0

with ``(A_ego, b_ego)`` depending on the shooting state and ``(A_obs, b_obs)`` fixed by
the predicted obstacle state at that step.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .core import ControlInput, MotionLimits, RoadGeometry, Trajectory, VehicleGeometry, VehicleState
from .errors import DimensionError
from .nlp import KktResiduals, NlpProblem, NlpSolution, NlpStatus, SolverOptions, solve
from .occupancy import (
    DualCertificate,
    OccupancyPolytope,
    certificate_for_direction,
    half_extents,
    occupancy_polytope,
    rect_distance,
    rotation_rows,
    rotation_rows_dpsi,
)
from .predict import PredictionResult

logger = logging.getLogger(__name__)

DUAL_BLOCK = 10
PLAN_LOG_COLUMNS = (
    "step", "a", "delta", "status", "iterations", "min_distance", "fallback", "solve_time",
)


class MpcConfig(BaseModel):
    """Horizon, weights and safety margin of the tracking MPC."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    horizon: int = Field(20, ge=2)
    q_tau: Tuple[float, float, float, float] = (1.0, 10.0, 10.0, 1.0)
    q_u: Tuple[float, float] = (0.5, 5.0)
    q_du: Tuple[float, float] = (1.0, 20.0)
    d_min: float = Field(0.3, gt=0.0)
    dt: float = Field(0.1, gt=0.0)
    obstacle_range: float = Field(60.0, gt=0.0)
    max_obstacles: int = Field(6, ge=0)
    pair_radius: float = Field(15.0, gt=0.0)
    acceptable_tol: float = Field(1e-3, gt=0.0)
    fallback_brake: float = -4.0
    cold_dual: float = Field(0.05, gt=0.0)
    solver: SolverOptions = Field(default_factory=lambda: SolverOptions(max_iter=100))
    iteration_log_dir: Optional[Path] = None

    @field_validator("q_tau", "q_u", "q_du")
    @classmethod
    def _non_negative(cls, value):
        if any(w < 0.0 for w in value):
            raise ValueError("MPC weights must be non-negative")
        return value


# kinematics -------------------------------------------------------------

def slip_angle(delta: float, geometry: VehicleGeometry) -> float:
    """Angle between the velocity and the heading for steering angle ``delta``."""
    return math.atan(geometry.lr / (geometry.lf + geometry.lr) * math.tan(delta))


def _step_with_jacobians(s: np.ndarray, u: np.ndarray, geometry: VehicleGeometry, dt: float):
    x, y, psi, v = s
    a, delta = u
    ratio = geometry.lr / (geometry.lf + geometry.lr)
    tan_delta = math.tan(delta)
    beta = math.atan(ratio * tan_delta)
    dbeta = ratio * (1.0 + tan_delta ** 2) / (1.0 + (ratio * tan_delta) ** 2)
    heading = psi + beta
    cos_h, sin_h = math.cos(heading), math.sin(heading)
    nxt = np.array([
        x + dt * v * cos_h,
        y + dt * v * sin_h,
        psi + dt * v / geometry.lr * math.sin(beta),
        v + dt * a,
    ])
    A = np.eye(4)
    A[0, 2] = -dt * v * sin_h
    A[0, 3] = dt * cos_h
    A[1, 2] = dt * v * cos_h
    A[1, 3] = dt * sin_h
    A[2, 3] = dt * math.sin(beta) / geometry.lr
    B = np.zeros((4, 2))
    B[0, 1] = -dt * v * sin_h * dbeta
    B[1, 1] = dt * v * cos_h * dbeta
    B[2, 1] = dt * v * math.cos(beta) * dbeta / geometry.lr
    B[3, 0] = dt
    return nxt, A, B


def kinematic_step(state: VehicleState, u: ControlInput, dt: float, geometry: VehicleGeometry) -> VehicleState:
    """One Euler step of the kinematic bicycle model; speed is clamped at zero."""
    nxt, _, _ = _step_with_jacobians(state.as_array(), u.as_array(), geometry, dt)
    nxt[3] = max(nxt[3], 0.0)
    return VehicleState.from_array(nxt)


def shoot(s0: np.ndarray, U: np.ndarray, geometry: VehicleGeometry, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Roll the controls ``U`` (shape ``(M, 2)``) forward from ``s0``.

    Unlike ``kinematic_step`` the speed is not clamped at zero, which keeps the
    sensitivities smooth. Inside the MPC the state rows ``v >= v_min`` keep feasible
    plans non-negative; ``plan_step`` clamps the speeds of the plan it reports.

    Returns:
        States of shape ``(M + 1, 4)`` and their sensitivities with respect to the
        flattened controls, shape ``(M + 1, 4, 2M)``.
    """
    M = U.shape[0]
    states = np.zeros((M + 1, 4))
    S = np.zeros((M + 1, 4, 2 * M))
    states[0] = s0
    for i in range(M):
        states[i + 1], A, B = _step_with_jacobians(states[i], U[i], geometry, dt)
        S[i + 1] = A @ S[i]
        S[i + 1][:, 2 * i:2 * i + 2] += B
    return states, S


# problem layout ---------------------------------------------------------

@dataclass(frozen=True)
class ObstaclePair:
    """One obstacle at one horizon step, with its predicted footprint."""

    vehicle_id: int
    step: int
    polytope: OccupancyPolytope


@dataclass
class MpcLayout:
    horizon: int
    start_step: int
    pairs: List[ObstaclePair]
    state_rows: List[Tuple[int, int, float, float]]

    @property
    def n_controls(self) -> int:
        return 2 * self.horizon

    @property
    def n(self) -> int:
        return self.n_controls + DUAL_BLOCK * len(self.pairs)

    @property
    def n_rate(self) -> int:
        return 4 * self.horizon

    @property
    def pair_ineq_offset(self) -> int:
        return self.n_rate + len(self.state_rows)

    @property
    def n_ineq(self) -> int:
        return self.pair_ineq_offset + 2 * len(self.pairs)

    @property
    def n_eq(self) -> int:
        return 4 * len(self.pairs)

    def block(self, p: int) -> slice:
        start = self.n_controls + DUAL_BLOCK * p
        return slice(start, start + DUAL_BLOCK)

    def pair_key(self, p: int) -> Tuple[int, int]:
        pair = self.pairs[p]
        return pair.vehicle_id, self.start_step + pair.step


@dataclass
class MpcProblem:
    nlp: NlpProblem
    layout: MpcLayout
    reference: Trajectory
    initial_state: VehicleState
    prev_u: ControlInput
    geometry: VehicleGeometry


class _ShootingCache:
    def __init__(self, s0: np.ndarray, horizon: int, geometry: VehicleGeometry, dt: float):
        self.s0 = s0
        self.horizon = horizon
        self.geometry = geometry
        self.dt = dt
        self._z: Optional[np.ndarray] = None
        self._value = None

    def __call__(self, z: np.ndarray):
        controls = z[:2 * self.horizon]
        if self._z is None or not np.array_equal(self._z, controls):
            self._z = controls.copy()
            self._value = shoot(self.s0, controls.reshape(self.horizon, 2), self.geometry, self.dt)
        return self._value


def _select_obstacles(
    reference: Trajectory,
    predictions: PredictionResult,
    cfg: MpcConfig,
) -> List[ObstaclePair]:
    ego0 = reference.states[0]
    nearby = []
    for vehicle_id, traj in predictions.trajectories.items():
        distance = abs(traj.states[0, 0] - ego0[0])
        if distance <= cfg.obstacle_range:
            nearby.append((distance, vehicle_id))
    nearby.sort()
    pairs = []
    for _, vehicle_id in nearby[:cfg.max_obstacles]:
        traj = predictions.trajectories[vehicle_id]
        geometry = predictions.geometries[vehicle_id]
        for i in range(1, cfg.horizon + 1):
            row = traj.states[i]
            if math.hypot(row[0] - reference.states[i, 0], row[1] - reference.states[i, 1]) > cfg.pair_radius:
                continue
            polytope = occupancy_polytope(VehicleState.from_array(row), geometry)
            pairs.append(ObstaclePair(vehicle_id=vehicle_id, step=i, polytope=polytope))
    return pairs


def build_mpc_problem(
    k: int,
    ref: Trajectory,
    predictions: PredictionResult,
    limits: MotionLimits,
    cfg: MpcConfig,
    road: RoadGeometry,
    geometry: VehicleGeometry,
    initial_state: Optional[VehicleState] = None,
    prev_u: Optional[ControlInput] = None,
) -> MpcProblem:
    """
    Assemble the MPC program for absolute step ``k``.

    The reference and every prediction must share ``dt`` with the planner; they are read
    from step ``k`` onwards and padded at constant velocity when shorter than ``k + M``.
    The shooting starts from ``initial_state`` (default: the reference at ``k``).

    Raises:
        DimensionError: If the reference or a prediction does not cover step ``k`` or
            uses a different sampling period.
    """
    M = cfg.horizon
    if abs(ref.dt - cfg.dt) > 1e-12:
        raise DimensionError(f"Reference dt {ref.dt} differs from the planner dt {cfg.dt}")
    offset = k - ref.start_step
    if offset < 0:
        raise DimensionError(f"Reference starts at step {ref.start_step}, after {k}")
    reference = ref.window(offset, M + 1)
    for vehicle_id, traj in predictions.trajectories.items():
        if abs(traj.dt - cfg.dt) > 1e-12 or k < traj.start_step:
            raise DimensionError(f"Prediction of vehicle {vehicle_id} does not cover step {k}")
    window = predictions.window_at(k, M + 1)

    state = initial_state or reference.state(0)
    prev = prev_u or ControlInput()
    pairs = _select_obstacles(reference, window, cfg)

    lower_s, upper_s = limits.state_bounds(road, geometry)
    state_rows = []
    for i in range(1, M + 1):
        for d in range(4):
            if np.isfinite(lower_s[d]):
                state_rows.append((i, d, 1.0, float(lower_s[d])))
            if np.isfinite(upper_s[d]):
                state_rows.append((i, d, -1.0, float(upper_s[d])))
    layout = MpcLayout(horizon=M, start_step=k, pairs=pairs, state_rows=state_rows)

    s0 = state.as_array()
    cache = _ShootingCache(s0, M, geometry, cfg.dt)
    ref_states = reference.states
    q_tau = np.array(cfg.q_tau)
    q_u = np.tile(np.array(cfg.q_u), M)
    q_du = np.tile(np.array(cfg.q_du), M)
    u_prev = prev.as_array()
    diff = np.eye(2 * M) - np.eye(2 * M, k=-2)
    diff_offset = np.concatenate([u_prev, np.zeros(2 * M - 2)])
    h_ego = half_extents(geometry)
    da_lo, da_hi = limits.rate_bounds
    n_pairs = len(pairs)
    obs_A = np.array([pair.polytope.A for pair in pairs]).reshape(n_pairs, 4, 2)
    obs_b = np.array([pair.polytope.b for pair in pairs]).reshape(n_pairs, 4)

    def controls(z):
        return z[:2 * M]

    def objective(z):
        states, _ = cache(z)
        err = states[1:] - ref_states[1:]
        u = controls(z)
        du = diff @ u - diff_offset
        return float(np.sum(err ** 2 * q_tau) + np.sum(q_u * u ** 2) + np.sum(q_du * du ** 2))

    def gradient(z):
        states, S = cache(z)
        err = states[1:] - ref_states[1:]
        u = controls(z)
        du = diff @ u - diff_offset
        grad = np.zeros(layout.n)
        grad[:2 * M] = 2.0 * np.einsum("ijk,ij->k", S[1:], err * q_tau) + 2.0 * q_u * u + 2.0 * diff.T @ (q_du * du)
        return grad

    def ego_terms(states, p):
        """Ego polytope rows, their heading derivative and the ego position at pair ``p``."""
        x, y, psi, _ = states[pairs[p].step]
        return rotation_rows(psi), rotation_rows_dpsi(psi), np.array([x, y])

    def ineq(z):
        states, _ = cache(z)
        u = controls(z).reshape(M, 2)
        g = np.zeros(layout.n_ineq)
        previous = np.vstack([u_prev, u[:-1]])
        du = u - previous
        g[:layout.n_rate] = np.column_stack([
            da_hi[0] - du[:, 0], du[:, 0] - da_lo[0], da_hi[1] - du[:, 1], du[:, 1] - da_lo[1],
        ]).ravel()
        for r, (i, d, sign, bound) in enumerate(state_rows):
            g[layout.n_rate + r] = sign * (states[i, d] - bound)
        base = layout.pair_ineq_offset
        for p in range(n_pairs):
            block = z[layout.block(p)]
            lam, mu, rho = block[:4], block[4:8], block[8:]
            A_e, _, pos = ego_terms(states, p)
            b_e = h_ego + A_e @ pos
            g[base + 2 * p] = -b_e @ lam - obs_b[p] @ mu - cfg.d_min
            g[base + 2 * p + 1] = 1.0 - rho @ rho
        return g

    def ineq_jacobian(z):
        states, S = cache(z)
        J = np.zeros((layout.n_ineq, layout.n))
        rate_rows = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
        for i in range(M):
            J[4 * i:4 * i + 4, 2 * i:2 * i + 2] = rate_rows
            if i > 0:
                J[4 * i:4 * i + 4, 2 * i - 2:2 * i] = -rate_rows
        for r, (i, d, sign, _) in enumerate(state_rows):
            J[layout.n_rate + r, :2 * M] = sign * S[i, d]
        base = layout.pair_ineq_offset
        for p in range(n_pairs):
            block = layout.block(p)
            values = z[block]
            lam, rho = values[:4], values[8:]
            A_e, dA, pos = ego_terms(states, p)
            d_state = -np.array([A_e[:, 0] @ lam, A_e[:, 1] @ lam, lam @ (dA @ pos), 0.0])
            row = base + 2 * p
            J[row, :2 * M] = d_state @ S[pairs[p].step]
            J[row, block.start:block.start + 4] = -(h_ego + A_e @ pos)
            J[row, block.start + 4:block.start + 8] = -obs_b[p]
            J[row + 1, block.start + 8:block.stop] = -2.0 * rho
        return J

    def eq(z):
        states, _ = cache(z)
        c = np.zeros(layout.n_eq)
        for p in range(n_pairs):
            block = z[layout.block(p)]
            lam, mu, rho = block[:4], block[4:8], block[8:]
            A_e, _, _ = ego_terms(states, p)
            c[4 * p:4 * p + 2] = A_e.T @ lam + rho
            c[4 * p + 2:4 * p + 4] = obs_A[p].T @ mu - rho
        return c

    def eq_jacobian(z):
        states, S = cache(z)
        J = np.zeros((layout.n_eq, layout.n))
        for p in range(n_pairs):
            block = layout.block(p)
            lam = z[block][:4]
            A_e, dA, _ = ego_terms(states, p)
            rows = slice(4 * p, 4 * p + 2)
            J[rows, :2 * M] = np.outer(dA.T @ lam, S[pairs[p].step][2])
            J[rows, block.start:block.start + 4] = A_e.T
            J[rows, block.start + 8:block.stop] = np.eye(2)
            rows = slice(4 * p + 2, 4 * p + 4)
            J[rows, block.start + 4:block.start + 8] = obs_A[p].T
            J[rows, block.start + 8:block.stop] = -np.eye(2)
        return J

    def hessian(z, y_eq, y_ineq):
        # Gauss-Newton on the tracking terms plus the exact control/dual coupling
        states, S = cache(z)
        H = np.zeros((layout.n, layout.n))
        H[:2 * M, :2 * M] = (
            2.0 * np.einsum("ijk,j,ijl->kl", S[1:], q_tau, S[1:])
            + 2.0 * np.diag(q_u)
            + 2.0 * diff.T @ (q_du[:, None] * diff)
        )
        base = layout.pair_ineq_offset
        for p in range(n_pairs):
            block = layout.block(p)
            y_g1 = y_ineq[base + 2 * p]
            y_g2 = y_ineq[base + 2 * p + 1]
            y_c1 = y_eq[4 * p:4 * p + 2]
            A_e, dA, pos = ego_terms(states, p)
            d_b = np.column_stack([A_e[:, 0], A_e[:, 1], dA @ pos, np.zeros(4)])
            coupling = y_g1 * d_b
            coupling[:, 2] -= dA @ y_c1
            cross = coupling @ S[pairs[p].step]
            lam = slice(block.start, block.start + 4)
            H[lam, :2 * M] += cross
            H[:2 * M, lam] += cross.T
            rho = slice(block.start + 8, block.stop)
            H[rho, rho] += 2.0 * y_g2 * np.eye(2)
        return H

    lower = np.full(layout.n, -np.inf)
    upper = np.full(layout.n, np.inf)
    u_lo, u_hi = limits.control_bounds
    lower[:2 * M] = np.tile(u_lo, M)
    upper[:2 * M] = np.tile(u_hi, M)
    x0 = np.zeros(layout.n)
    x0[:2 * M] = np.tile(np.clip(u_prev, u_lo, u_hi), M)
    for p, pair in enumerate(pairs):
        block = layout.block(p)
        lower[block.start:block.start + 8] = 0.0
        lower[block.start + 8:block.stop] = -1.0
        upper[block.start + 8:block.stop] = 1.0
        x0[block] = _cold_certificate(reference.state(pair.step), geometry, pair.polytope, cfg.cold_dual)

    nlp = NlpProblem(
        n=layout.n,
        objective=objective,
        gradient=gradient,
        x0=x0,
        lower=lower,
        upper=upper,
        n_eq=layout.n_eq,
        eq=eq,
        eq_jacobian=eq_jacobian,
        n_ineq=layout.n_ineq,
        ineq=ineq,
        ineq_jacobian=ineq_jacobian,
        hessian=hessian,
        name=f"mpc@{k}",
    )
    return MpcProblem(nlp=nlp, layout=layout, reference=reference, initial_state=state, prev_u=prev, geometry=geometry)


def _cold_certificate(ego: VehicleState, geometry: VehicleGeometry, obstacle: OccupancyPolytope, cold_dual: float) -> np.ndarray:
    """Certificate along the centre line when it separates, small positive duals otherwise."""
    ego_poly = occupancy_polytope(ego, geometry)
    direction = np.array([ego.x - obstacle.state.x, ego.y - obstacle.state.y])
    norm = float(np.linalg.norm(direction))
    if norm > 1e-9:
        cert, value = certificate_for_direction(ego_poly, obstacle, direction / norm)
        if value > 0.0:
            return np.concatenate([cert.lam, cert.mu, cert.rho])
    return np.concatenate([np.full(8, cold_dual), np.zeros(2)])


# planning ---------------------------------------------------------------

@dataclass
class PlanStepResult:
    """Outcome of one receding-horizon solve."""

    step: int
    control: ControlInput
    next_state: VehicleState
    planned: Trajectory
    status: NlpStatus
    accepted: bool
    acceptable: bool
    fallback: bool
    iterations: int
    solve_time: float
    certificates: Dict[Tuple[int, int], DualCertificate] = field(default_factory=dict)
    min_distance: float = math.inf
    solution: Optional[NlpSolution] = None
    layout: Optional[MpcLayout] = None

    @property
    def plan_status(self) -> str:
        if self.fallback:
            return "FALLBACK"
        return "ACCEPTABLE" if self.acceptable else self.status.value

    def log_row(self, min_distance: Optional[float] = None) -> dict:
        return {
            "step": self.step,
            "a": self.control.a,
            "delta": self.control.delta,
            "status": self.plan_status,
            "iterations": self.iterations,
            "min_distance": self.min_distance if min_distance is None else min_distance,
            "fallback": int(self.fallback),
            "solve_time": self.solve_time,
        }


def fallback_control(state: VehicleState, prev_u: ControlInput, limits: MotionLimits, cfg: MpcConfig) -> ControlInput:
    """Hold the steering angle and brake at the comfortable rate the rate limits allow."""
    da_lo, da_hi = limits.rate_bounds
    a = min(max(cfg.fallback_brake, prev_u.a + da_lo[0]), prev_u.a + da_hi[0])
    a = min(max(a, limits.a_min), limits.a_max)
    return ControlInput(a=a, delta=prev_u.delta)


def clamp_control(u: np.ndarray, prev_u: ControlInput, limits: MotionLimits) -> ControlInput:
    """Project ``u`` onto the intersection of the control box and the rate window."""
    u_lo, u_hi = limits.control_bounds
    da_lo, da_hi = limits.rate_bounds
    prev = prev_u.as_array()
    lo = np.maximum(u_lo, prev + da_lo)
    hi = np.minimum(u_hi, prev + da_hi)
    a, delta = np.minimum(np.maximum(u, lo), hi)
    return ControlInput(a=float(a), delta=float(delta))


def _is_acceptable(solution: NlpSolution, cfg: MpcConfig) -> bool:
    r = solution.residuals
    return (
        solution.status == NlpStatus.MAX_ITER
        and r.primal <= cfg.solver.tol
        and r.stationarity <= cfg.acceptable_tol
    )


def plan_step(
    k: int,
    ref: Trajectory,
    predictions: PredictionResult,
    state: VehicleState,
    prev_u: ControlInput,
    limits: MotionLimits,
    cfg: MpcConfig,
    road: RoadGeometry,
    geometry: VehicleGeometry,
    previous: Optional[PlanStepResult] = None,
) -> PlanStepResult:
    """Solve the MPC at step ``k`` from ``state`` and apply the first control."""
    problem = build_mpc_problem(k, ref, predictions, limits, cfg, road, geometry, initial_state=state, prev_u=prev_u)
    warm = shift_warm_start(previous, problem) if previous is not None else None
    log_path = None
    if cfg.iteration_log_dir is not None:
        log_path = Path(cfg.iteration_log_dir) / f"step_{k:05d}.csv"
    started = time.perf_counter()
    solution = solve(problem.nlp, cfg.solver, warm_start=warm, log_path=log_path)
    elapsed = time.perf_counter() - started

    layout = problem.layout
    M = layout.horizon
    acceptable = _is_acceptable(solution, cfg)
    accepted = solution.status == NlpStatus.OPTIMAL_LOCAL or acceptable
    if accepted:
        U = solution.z[:2 * M].reshape(M, 2).copy()
        control = clamp_control(U[0], prev_u, limits)
        U[0] = control.as_array()
    else:
        logger.warning(
            "MPC at step %d ended with %s (%s), braking fallback", k, solution.status.value, solution.message,
        )
        control = fallback_control(state, prev_u, limits, cfg)
        U = np.tile(control.as_array(), (M, 1))
    states, _ = shoot(state.as_array(), U, geometry, cfg.dt)
    states[:, 3] = np.maximum(states[:, 3], 0.0)
    planned = Trajectory(k, cfg.dt, states)

    certificates = {}
    min_distance = math.inf
    for p, pair in enumerate(layout.pairs):
        ego_poly = occupancy_polytope(planned.state(pair.step), geometry)
        min_distance = min(min_distance, rect_distance(ego_poly, pair.polytope))
        if accepted:
            block = solution.z[layout.block(p)]
            certificates[layout.pair_key(p)] = DualCertificate(lam=block[:4], mu=block[4:8], rho=block[8:])

    logger.debug(
        "MPC step %d: %s in %d iterations (%.3fs), u=(%.3f, %.4f)",
        k, solution.status.value, solution.iterations, elapsed, control.a, control.delta,
    )
    return PlanStepResult(
        step=k,
        control=control,
        next_state=kinematic_step(state, control, cfg.dt, geometry),
        planned=planned,
        status=solution.status,
        accepted=accepted,
        acceptable=acceptable,
        fallback=not accepted,
        iterations=solution.iterations,
        solve_time=elapsed,
        certificates=certificates,
        min_distance=min_distance,
        solution=solution if accepted else None,
        layout=layout,
    )


def shift_warm_start(previous: PlanStepResult, problem: MpcProblem) -> Optional[NlpSolution]:
    """
    Shift the previous solution one step forward onto the new problem layout.

    Controls move up by one step with the last repeated. Certificates and multipliers
    of obstacle pairs carry over when the same vehicle appears at the same absolute step;
    new pairs keep their cold values.
    """
    solution, old = previous.solution, previous.layout
    new = problem.layout
    if solution is None or old is None or old.horizon != new.horizon:
        return None
    M = new.horizon
    shift = new.start_step - old.start_step
    if shift < 0 or shift >= M:
        return None

    z = problem.nlp.x0.copy()
    z_lower = np.zeros(new.n)
    z_upper = np.zeros(new.n)
    U = solution.z[:2 * M].reshape(M, 2)
    index = np.minimum(np.arange(M) + shift, M - 1)
    z[:2 * M] = U[index].ravel()
    z_lower[:2 * M] = solution.z_lower[:2 * M].reshape(M, 2)[index].ravel()
    z_upper[:2 * M] = solution.z_upper[:2 * M].reshape(M, 2)[index].ravel()

    y_ineq = np.zeros(new.n_ineq)
    y_eq = np.zeros(new.n_eq)
    y_ineq[:new.n_rate] = solution.y_ineq[:old.n_rate].reshape(M, 4)[index].ravel()
    old_state_rows = {(old.start_step + i, d, sign): r for r, (i, d, sign, _) in enumerate(old.state_rows)}
    for r, (i, d, sign, _) in enumerate(new.state_rows):
        source = old_state_rows.get((new.start_step + i, d, sign))
        if source is not None:
            y_ineq[new.n_rate + r] = solution.y_ineq[old.n_rate + source]

    old_pairs = {old.pair_key(p): p for p in range(len(old.pairs))}
    for p in range(len(new.pairs)):
        source = old_pairs.get(new.pair_key(p))
        if source is None:
            continue
        z[new.block(p)] = solution.z[old.block(source)]
        z_lower[new.block(p)] = solution.z_lower[old.block(source)]
        z_upper[new.block(p)] = solution.z_upper[old.block(source)]
        y_ineq[new.pair_ineq_offset + 2 * p:new.pair_ineq_offset + 2 * p + 2] = \
            solution.y_ineq[old.pair_ineq_offset + 2 * source:old.pair_ineq_offset + 2 * source + 2]
        y_eq[4 * p:4 * p + 4] = solution.y_eq[4 * source:4 * source + 4]

    return NlpSolution(
        z=z,
        objective=solution.objective,
        status=solution.status,
        residuals=KktResiduals(
            stationarity=solution.residuals.stationarity,
            primal=solution.residuals.primal,
            complementarity=solution.residuals.complementarity,
        ),
        y_eq=y_eq,
        y_ineq=y_ineq,
        z_lower=z_lower,
        z_upper=z_upper,
        iterations=0,
        mu=solution.mu,
        message="shifted",
    )


@dataclass
class HorizonResult:
    trajectory: Trajectory
    controls: np.ndarray
    steps: List[PlanStepResult]

    @property
    def fallback_count(self) -> int:
        return sum(1 for step in self.steps if step.fallback)


def plan_horizon(
    ref: Trajectory,
    predictions: PredictionResult,
    start_state: VehicleState,
    applied_prev_u: ControlInput,
    limits: MotionLimits,
    cfg: MpcConfig,
    road: RoadGeometry,
    geometry: VehicleGeometry,
    steps: Optional[int] = None,
) -> HorizonResult:
    """
    Track ``ref`` open-loop against fixed predictions, re-solving at every step.

    Runs ``len(ref) - M`` steps by default, warm-starting each solve from the shifted
    previous solution and falling back to braking whenever a solve is not usable.
    """
    steps = len(ref) - cfg.horizon if steps is None else steps
    if steps < 1:
        raise DimensionError(f"Reference of {len(ref)} samples is too short for a horizon of {cfg.horizon}")
    state, prev_u = start_state, applied_prev_u
    states = [state]
    controls = []
    results: List[PlanStepResult] = []
    previous = None
    for j in range(steps):
        k = ref.start_step + j
        result = plan_step(k, ref, predictions, state, prev_u, limits, cfg, road, geometry, previous=previous)
        results.append(result)
        controls.append(result.control.as_array())
        state, prev_u = result.next_state, result.control
        states.append(state)
        previous = result if result.accepted else None
    return HorizonResult(
        trajectory=Trajectory.from_states(ref.start_step, ref.dt, states),
        controls=np.array(controls),
        steps=results,
    )


def write_plan_log(path: Path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=PLAN_LOG_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return path
