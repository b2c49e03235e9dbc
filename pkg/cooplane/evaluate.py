"""
Safety, efficiency and comfort costs of decision candidates, and selection of the cheapest.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .core import RoadGeometry
from .errors import InputError
from .predict import PredictionRequest, PredictionResult, Predictor
from .refgen import DecisionCandidate, LateralAction
from .traffic import WorldState

logger = logging.getLogger(__name__)


class CostWeights(BaseModel):
    """
    Top-level weights and regularization coefficients of the decision cost.

    ``safety_form="ramp"`` penalizes closing speed over distance and is never negative.
    ``safety_form="printed"`` sums ``min(dv / ds, 0)`` with ``dv`` the ego speed minus the
    neighbour speed; its safety terms are zero or negative, so ``J_s`` can lower ``J_d``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_s: float = Field(1.0, ge=0.0)
    lambda_e: float = Field(1.0, ge=0.0)
    lambda_c: float = Field(1.0, ge=0.0)
    kappa_s_lon: float = Field(100.0, ge=0.0)
    kappa_s_lat: float = Field(100.0, ge=0.0)
    kappa_e: float = Field(1.0, ge=0.0)
    kappa_c_lon: float = Field(1.0, ge=0.0)
    kappa_c_lat: float = Field(1.0, ge=0.0)
    v_des: float = Field(25.0, ge=0.0)
    safety_form: Literal["ramp", "printed"] = "ramp"
    delta_s_floor: float = Field(0.1, gt=0.0)


@dataclass(frozen=True)
class CostBreakdown:
    """Cost terms of one candidate. Safety terms are non-negative only under the ramp form."""

    index: int
    label: str
    J_s_lon: float
    J_s_lat: float
    J_s: float
    J_e: float
    J_c: float
    J_d: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Neighbors:
    pv_lon: Optional[int] = None
    fv_lon: Optional[int] = None
    pv_lat: Optional[int] = None
    fv_lat: Optional[int] = None


@dataclass(frozen=True)
class Decision:
    candidate: DecisionCandidate
    prediction: PredictionResult
    breakdowns: List[CostBreakdown]
    predictions: Dict[int, PredictionResult] = field(default_factory=dict)

    @property
    def chosen(self) -> CostBreakdown:
        return next(b for b in self.breakdowns if b.index == self.candidate.index)


def _nearest_in_lane(ego_x: float, lane: int, states: Mapping[int, np.ndarray], road: RoadGeometry) -> Tuple[Optional[int], Optional[int]]:
    ahead, behind = None, None
    ahead_dx, behind_dx = math.inf, math.inf
    for vehicle_id, row in states.items():
        if road.lane_of(row[1]) != lane:
            continue
        dx = row[0] - ego_x
        if dx >= 0.0 and dx < ahead_dx:
            ahead, ahead_dx = vehicle_id, dx
        elif dx < 0.0 and -dx < behind_dx:
            behind, behind_dx = vehicle_id, -dx
    return ahead, behind


def find_neighbors(
    ego_x: float,
    lane: int,
    states: Mapping[int, np.ndarray],
    road: RoadGeometry,
    target_lane: Optional[int] = None,
) -> Neighbors:
    """
    Nearest preceding and following vehicle in ``lane`` and, when given and different,
    in ``target_lane``. ``states`` maps vehicle ids to ``(x, y, psi, v)`` rows at one step.
    """
    pv_lon, fv_lon = _nearest_in_lane(ego_x, lane, states, road)
    pv_lat = fv_lat = None
    if target_lane is not None and target_lane != lane:
        pv_lat, fv_lat = _nearest_in_lane(ego_x, target_lane, states, road)
    return Neighbors(pv_lon, fv_lon, pv_lat, fv_lat)


def _pair_term(ego: np.ndarray, other: np.ndarray, preceding: bool, weights: CostWeights) -> float:
    delta_s = max(float(np.hypot(other[0] - ego[0], other[1] - ego[1])), weights.delta_s_floor)
    if weights.safety_form == "printed":
        delta_v = ego[3] - other[3]
        return min(delta_v / delta_s, 0.0)
    closing = ego[3] - other[3] if preceding else other[3] - ego[3]
    return max(closing, 0.0) / delta_s


def safety_cost(
    candidate: DecisionCandidate,
    predictions: PredictionResult,
    weights: CostWeights,
    road: RoadGeometry,
) -> Tuple[float, float, float]:
    """
    Inverse time-to-collision penalties against same-lane and target-lane neighbours.

    Roles are re-evaluated at every sample: the same-lane pair follows the ego's lane at
    that sample and the target-lane pair applies while the ego has not yet reached it.
    """
    reference = candidate.reference
    n = len(reference)
    if predictions.trajectories and predictions.horizon < n:
        raise InputError(f"Predictions cover {predictions.horizon} samples, candidate has {n}")
    j_lon = j_lat = 0.0
    for k in range(n):
        ego = reference.states[k]
        states = predictions.states_at(k)
        if not states:
            break
        lane = road.lane_of(ego[1])
        neighbors = find_neighbors(ego[0], lane, states, road, candidate.target_lane)
        for vehicle_id, preceding in ((neighbors.pv_lon, True), (neighbors.fv_lon, False)):
            if vehicle_id is not None:
                j_lon += _pair_term(ego, states[vehicle_id], preceding, weights)
        for vehicle_id, preceding in ((neighbors.pv_lat, True), (neighbors.fv_lat, False)):
            if vehicle_id is not None:
                j_lat += _pair_term(ego, states[vehicle_id], preceding, weights)
    j_lon *= weights.kappa_s_lon
    j_lat *= weights.kappa_s_lat
    eta = 1.0 if candidate.is_lane_change else 0.0
    return j_lon, j_lat, j_lon + eta ** 2 * j_lat


def efficiency_cost(candidate: DecisionCandidate, predictions: PredictionResult, weights: CostWeights) -> float:
    ego = float(np.sum((candidate.reference.v - weights.v_des) ** 2))
    others = 0.0
    if predictions.trajectories:
        others = sum(float(np.sum((traj.v - weights.v_des) ** 2)) for traj in predictions.trajectories.values())
        others /= len(predictions.trajectories)
    return weights.kappa_e * (ego + others)


def comfort_cost(candidate: DecisionCandidate, weights: CostWeights) -> float:
    """
    Sum of squared longitudinal and lateral jerks differenced from the sampled velocity.

    Candidates built by ``build_reference`` are differenced on their generated velocity
    profile, so a residual heading in the live state at sample 0 adds no jerk.
    """
    reference = candidate.reference
    if len(reference) < 3:
        raise InputError(f"Comfort cost needs at least 3 samples, got {len(reference)}")
    dt = reference.dt
    if candidate.velocity is not None:
        v_lon, v_lat = candidate.velocity[:, 0], candidate.velocity[:, 1]
    else:
        v_lon = reference.v * np.cos(reference.psi)
        v_lat = reference.v * np.sin(reference.psi)
    jerk_lon = np.diff(v_lon, n=2) / dt ** 2
    jerk_lat = np.diff(v_lat, n=2) / dt ** 2
    return float(weights.kappa_c_lon * np.sum(jerk_lon ** 2) + weights.kappa_c_lat * np.sum(jerk_lat ** 2))


def score_candidate(
    candidate: DecisionCandidate,
    predictions: PredictionResult,
    weights: CostWeights,
    road: RoadGeometry,
) -> CostBreakdown:
    j_s_lon, j_s_lat, j_s = safety_cost(candidate, predictions, weights, road)
    j_e = efficiency_cost(candidate, predictions, weights)
    j_c = comfort_cost(candidate, weights)
    j_d = weights.lambda_s * j_s + weights.lambda_e * j_e + weights.lambda_c * j_c
    return CostBreakdown(
        index=candidate.index,
        label=candidate.label,
        J_s_lon=j_s_lon,
        J_s_lat=j_s_lat,
        J_s=j_s,
        J_e=j_e,
        J_c=j_c,
        J_d=j_d,
    )


def _tie_key(candidate: DecisionCandidate, breakdown: CostBreakdown):
    v_x0 = candidate.reference.v[0] * math.cos(candidate.reference.psi[0])
    return (
        breakdown.J_d,
        candidate.lateral != LateralAction.KEEP,
        abs(candidate.longitudinal.v_x1 - v_x0),
        candidate.index,
    )


def select_decision(
    candidates: Sequence[DecisionCandidate],
    world: WorldState,
    predictor: Predictor,
    weights: Optional[CostWeights] = None,
) -> Decision:
    """
    Predict, score and pick the candidate with the lowest total cost.

    Ties prefer lane keeping, then the smaller speed change, then the lowest index.
    """
    if not candidates:
        raise InputError("Cannot select a decision from an empty candidate set")
    weights = weights or CostWeights()
    predictions: Dict[int, PredictionResult] = {}
    breakdowns: List[CostBreakdown] = []
    for candidate in candidates:
        request = PredictionRequest.from_world(candidate, world)
        predictions[candidate.index] = predictor(request)
        breakdowns.append(score_candidate(candidate, predictions[candidate.index], weights, world.road))
    best = min(range(len(candidates)), key=lambda i: _tie_key(candidates[i], breakdowns[i]))
    chosen = candidates[best]
    logger.info("Selected %s (J_d=%.2f) among %d candidates", chosen.label, breakdowns[best].J_d, len(candidates))
    return Decision(candidate=chosen, prediction=predictions[chosen.index], breakdowns=breakdowns,
                    predictions=predictions)


def export_breakdowns(breakdowns: Sequence[CostBreakdown], path: Path) -> Path:
    """Write one JSON record per candidate."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump([b.to_dict() for b in breakdowns], f, indent=2)
    return path
