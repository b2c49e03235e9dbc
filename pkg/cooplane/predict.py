"""
Candidate-conditioned prediction of surrounding traffic.

The interactive predictor pins the ego to a candidate reference and rolls the rest of the
world forward one step at a time, so followers can react to a merging ego. The
constant-velocity predictor ignores the candidate entirely.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Mapping, Optional, Protocol, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .core import Trajectory, VehicleGeometry
from .errors import DimensionError
from .refgen import DecisionCandidate
from . import traffic
from .traffic import WorldState

logger = logging.getLogger(__name__)


class PredictorKind(str, Enum):
    INTERACTIVE = "interactive"
    CONSTANT_VELOCITY = "constant_velocity"


class PredictorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: PredictorKind = PredictorKind.INTERACTIVE
    history_seconds: float = Field(2.0, ge=0.0)
    lane_changes: bool = True
    overlap_threshold: float = Field(0.25, gt=0.0, le=1.0)


@dataclass(frozen=True)
class PredictionRequest:
    """Everything a predictor may look at for one candidate."""

    candidate: DecisionCandidate
    world: WorldState
    histories: Mapping[int, Trajectory] = field(default_factory=dict)
    horizon: Optional[int] = None

    def __post_init__(self):
        horizon = len(self.candidate.reference) if self.horizon is None else int(self.horizon)
        if horizon < 1:
            raise DimensionError(f"Prediction horizon must be at least one sample, got {horizon}")
        if len(self.candidate.reference) < horizon:
            raise DimensionError(
                f"Candidate reference has {len(self.candidate.reference)} samples, fewer than the horizon {horizon}"
            )
        object.__setattr__(self, "horizon", horizon)

    @classmethod
    def from_world(cls, candidate: DecisionCandidate, world: WorldState, horizon: Optional[int] = None) -> "PredictionRequest":
        histories = {vehicle.vehicle_id: world.observed(vehicle.vehicle_id) for vehicle in world.others}
        return cls(candidate=candidate, world=world, histories=histories, horizon=horizon)

    @property
    def start_step(self) -> int:
        return self.candidate.reference.start_step

    @property
    def dt(self) -> float:
        return self.candidate.reference.dt


@dataclass(frozen=True)
class PredictionResult:
    """Predicted trajectories of the surrounding vehicles, index-aligned with the candidate."""

    trajectories: Dict[int, Trajectory]
    geometries: Dict[int, VehicleGeometry]
    kind: PredictorKind

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def horizon(self) -> int:
        return len(next(iter(self.trajectories.values()))) if self.trajectories else 0

    def states_at(self, i: int) -> Dict[int, np.ndarray]:
        return {vehicle_id: traj.states[i] for vehicle_id, traj in self.trajectories.items()}

    def window_at(self, step: int, count: int) -> "PredictionResult":
        """``count`` samples of every trajectory from absolute ``step``, padded at constant velocity."""
        return PredictionResult(
            trajectories={vid: traj.window(step - traj.start_step, count) for vid, traj in self.trajectories.items()},
            geometries=dict(self.geometries),
            kind=self.kind,
        )


class OneStepModel(Protocol):
    """Advances every surrounding vehicle of ``world`` by one period, in place."""

    def prepare(self, world: WorldState) -> None:
        ...

    def advance(self, world: WorldState, histories: Mapping[int, Trajectory]) -> None:
        ...


class RuleBasedReactionModel:
    """
    Deterministic IDM + MOBIL reaction with each driver's nominal parameters.

    Observed histories are accepted but only the latest state is used.
    """

    def __init__(self, lane_changes: bool = True, overlap_threshold: float = 0.25):
        self.lane_changes = lane_changes
        self.overlap_threshold = overlap_threshold

    def prepare(self, world: WorldState) -> None:
        world.recycle = False
        world.overlap_threshold = self.overlap_threshold
        for vehicle in world.others:
            vehicle.params = vehicle.nominal_params

    def advance(self, world: WorldState, histories: Mapping[int, Trajectory]) -> None:
        traffic.step(world, lane_changes=self.lane_changes)


def predict_constant_velocity(req: PredictionRequest) -> PredictionResult:
    """Extrapolate every surrounding vehicle with its current speed and heading."""
    dt = req.dt
    steps = np.arange(req.horizon) * dt
    trajectories: Dict[int, Trajectory] = {}
    geometries: Dict[int, VehicleGeometry] = {}
    for vehicle in req.world.others:
        x, y, psi, v = vehicle.state.as_array()
        states = np.column_stack([
            x + v * np.cos(psi) * steps,
            y + v * np.sin(psi) * steps,
            np.full(req.horizon, psi),
            np.full(req.horizon, v),
        ])
        trajectories[vehicle.vehicle_id] = Trajectory(req.start_step, dt, states)
        geometries[vehicle.vehicle_id] = vehicle.geometry
    return PredictionResult(trajectories, geometries, PredictorKind.CONSTANT_VELOCITY)


def predict_interactive(req: PredictionRequest, model: Optional[OneStepModel] = None) -> PredictionResult:
    """
    Closed-loop rollout with the ego pinned to the candidate reference.

    Sample 0 is the current snapshot; for every later sample the ego is placed on the
    reference first and then the surrounding vehicles react through ``model``. The
    snapshot in the request is never modified.
    """
    model = model or RuleBasedReactionModel()
    world = req.world.copy()
    world.dt = req.dt
    model.prepare(world)
    reference = req.candidate.reference
    others = world.others
    rows = {vehicle.vehicle_id: [vehicle.state.as_array()] for vehicle in others}
    for k in range(1, req.horizon):
        world.set_ego_state(reference.state(k))
        model.advance(world, req.histories)
        for vehicle in others:
            rows[vehicle.vehicle_id].append(vehicle.state.as_array())
    trajectories = {vid: Trajectory(req.start_step, req.dt, np.array(states)) for vid, states in rows.items()}
    geometries = {vehicle.vehicle_id: vehicle.geometry for vehicle in others}
    logger.debug("Interactive prediction for %s over %d samples", req.candidate.label, req.horizon)
    return PredictionResult(trajectories, geometries, PredictorKind.INTERACTIVE)


Predictor = Callable[[PredictionRequest], PredictionResult]


def get_predictor(kind: Union[PredictorKind, str], config: Optional[PredictorConfig] = None) -> Predictor:
    """Return the predictor function for ``kind``."""
    kind = PredictorKind(kind)
    if kind == PredictorKind.CONSTANT_VELOCITY:
        return predict_constant_velocity
    config = config or PredictorConfig()
    model = RuleBasedReactionModel(lane_changes=config.lane_changes, overlap_threshold=config.overlap_threshold)

    def predictor(req: PredictionRequest) -> PredictionResult:
        return predict_interactive(req, model)

    return predictor
