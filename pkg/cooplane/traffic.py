"""
Background traffic: IDM car following, MOBIL lane changes and world stepping.
"""
from __future__ import annotations

import copy
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from .core import DriverParamRanges, RoadGeometry, Scenario, Trajectory, VehicleGeometry, VehicleState
from .errors import InputError

logger = logging.getLogger(__name__)

B_MAX = 9.0
EGO_ID = 0


@dataclass(frozen=True)
class DriverParams:
    """IDM and MOBIL parameters of one driver."""

    v0: float = 21.5
    T: float = 1.4
    s0: float = 3.0
    a_idm: float = 1.5
    b_idm: float = 2.0
    delta: float = 4.0
    politeness: float = 0.35
    threshold: float = 0.1
    b_safe: float = 4.0

    def __post_init__(self):
        for name in ("v0", "T", "s0", "a_idm", "b_idm", "delta", "threshold", "b_safe"):
            if not getattr(self, name) > 0.0:
                raise InputError(f"Driver parameter {name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.politeness <= 1.0:
            raise InputError(f"Politeness must lie in [0, 1], got {self.politeness}")

    @classmethod
    def nominal(cls, ranges: Optional[DriverParamRanges] = None, **overrides: float) -> "DriverParams":
        """Midpoint of every range."""
        ranges = ranges or DriverParamRanges()
        values = {name: 0.5 * (low + high) for name, (low, high) in _range_items(ranges)}
        values.update(overrides)
        return cls(**values)


def _range_items(ranges: DriverParamRanges):
    return [
        ("v0", ranges.v0), ("T", ranges.T), ("s0", ranges.s0), ("a_idm", ranges.a_idm),
        ("b_idm", ranges.b_idm), ("delta", ranges.delta_idm), ("politeness", ranges.politeness),
        ("threshold", ranges.threshold), ("b_safe", ranges.b_safe),
    ]


def sample_driver_params(rng: np.random.Generator, ranges: Optional[DriverParamRanges] = None) -> DriverParams:
    """Draw every parameter uniformly from its range, in a fixed order."""
    ranges = ranges or DriverParamRanges()
    values = {}
    for name, (low, high) in _range_items(ranges):
        if low > high:
            raise InputError(f"Empty range for {name}: [{low}, {high}]")
        values[name] = float(rng.uniform(low, high)) if high > low else float(low)
    return DriverParams(**values)


def desired_gap(v: float, v_lead: float, params: DriverParams) -> float:
    return params.s0 + v * params.T + v * (v - v_lead) / (2.0 * math.sqrt(params.a_idm * params.b_idm))


def idm_accel(v: float, v_lead: Optional[float], gap: Optional[float], params: DriverParams) -> float:
    """
    Intelligent Driver Model acceleration, clipped to ``[-B_MAX, a_idm]``.

    Without a leader only the free-road term applies. A non-positive gap returns the
    emergency braking value.
    """
    free = 1.0 - (v / params.v0) ** params.delta
    if v_lead is None or gap is None:
        return float(np.clip(params.a_idm * free, -B_MAX, params.a_idm))
    if gap <= 0.0:
        logger.warning("IDM gap %.3f m is not positive, emergency braking", gap)
        return -B_MAX
    s_star = max(desired_gap(v, v_lead, params), 0.0)
    accel = params.a_idm * (free - (s_star / gap) ** 2)
    return float(np.clip(accel, -B_MAX, params.a_idm))


class LaneDecision(str, Enum):
    STAY = "stay"
    LEFT = "left"
    RIGHT = "right"

    @property
    def lane_offset(self) -> int:
        return {"stay": 0, "left": 1, "right": -1}[self.value]


@dataclass
class LaneChange:
    """Fixed-duration sinusoidal lateral transition."""

    start_y: float
    target_y: float
    target_lane: int
    duration: float
    elapsed: float = 0.0

    def lateral(self, elapsed: float) -> Tuple[float, float]:
        phase = min(max(elapsed / self.duration, 0.0), 1.0)
        span = self.target_y - self.start_y
        y = self.start_y + 0.5 * span * (1.0 - math.cos(math.pi * phase))
        v_y = 0.5 * span * math.pi / self.duration * math.sin(math.pi * phase) if phase < 1.0 else 0.0
        return y, v_y

    @property
    def done(self) -> bool:
        return self.elapsed >= self.duration - 1e-9


@dataclass
class SimVehicle:
    vehicle_id: int
    state: VehicleState
    geometry: VehicleGeometry
    params: DriverParams
    stationary: bool = False
    is_ego: bool = False
    lane_change: Optional[LaneChange] = None
    cooldown: float = 0.0
    accel: float = 0.0
    nominal: Optional[DriverParams] = None

    @property
    def nominal_params(self) -> DriverParams:
        """Range-midpoint parameters of this driver, used when its true parameters are unknown."""
        return self.nominal or self.params

    @property
    def front(self) -> float:
        return self.state.x + 0.5 * self.geometry.length

    @property
    def rear(self) -> float:
        return self.state.x - 0.5 * self.geometry.length


@dataclass
class WorldState:
    """
    Mutable simulation state. The ego, when present, is ``vehicles[0]`` and is moved by
    its own policy, never by :func:`step`.
    """

    step: int
    dt: float
    road: RoadGeometry
    vehicles: List[SimVehicle]
    rng: np.random.Generator
    ranges: DriverParamRanges = field(default_factory=DriverParamRanges)
    recycle: bool = False
    history_length: int = 21
    lane_change_duration: float = 3.0
    cooldown: float = 2.0
    overlap_threshold: float = 0.25
    recycle_ahead: float = 300.0
    recycle_behind: float = 200.0
    history: Dict[int, Deque[VehicleState]] = field(default_factory=dict)

    def __post_init__(self):
        for vehicle in self.vehicles:
            if vehicle.vehicle_id not in self.history:
                self.history[vehicle.vehicle_id] = deque([vehicle.state], maxlen=self.history_length)

    @classmethod
    def from_scenario(
        cls,
        scenario: Scenario,
        ego_params: Optional[DriverParams] = None,
        seed: Optional[int] = None,
        history_seconds: float = 2.0,
        ranges: Optional[DriverParamRanges] = None,
    ) -> "WorldState":
        ranges = ranges or DriverParamRanges()
        rng = np.random.default_rng(scenario.seed if seed is None else seed)
        ego = SimVehicle(
            vehicle_id=EGO_ID,
            state=scenario.ego.state,
            geometry=scenario.ego.geometry,
            params=ego_params or DriverParams.nominal(),
            is_ego=True,
        )
        vehicles = [ego]
        for i, spec in enumerate(scenario.others, start=1):
            params = sample_driver_params(rng, spec.driver or ranges)
            vehicles.append(SimVehicle(
                vehicle_id=i,
                state=spec.state,
                geometry=spec.geometry,
                params=params,
                nominal=DriverParams.nominal(spec.driver or ranges),
                stationary=spec.stationary,
            ))
        return cls(
            step=0,
            dt=scenario.dt,
            road=scenario.road,
            vehicles=vehicles,
            rng=rng,
            ranges=ranges,
            recycle=scenario.recycle,
            history_length=int(round(history_seconds / scenario.dt)) + 1,
        )

    @property
    def ego(self) -> Optional[SimVehicle]:
        for vehicle in self.vehicles:
            if vehicle.is_ego:
                return vehicle
        return None

    @property
    def others(self) -> List[SimVehicle]:
        return [vehicle for vehicle in self.vehicles if not vehicle.is_ego]

    def vehicle(self, vehicle_id: int) -> SimVehicle:
        for vehicle in self.vehicles:
            if vehicle.vehicle_id == vehicle_id:
                return vehicle
        raise InputError(f"No vehicle with id {vehicle_id}")

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def set_ego_state(self, state: VehicleState) -> None:
        self.ego.state = state

    def record_history(self) -> None:
        for vehicle in self.vehicles:
            buffer = self.history.setdefault(vehicle.vehicle_id, deque(maxlen=self.history_length))
            buffer.append(vehicle.state)

    def observed(self, vehicle_id: int) -> Trajectory:
        """Observed states of a vehicle, oldest first, ending at the current step."""
        states = list(self.history.get(vehicle_id, [])) or [self.vehicle(vehicle_id).state]
        return Trajectory.from_states(self.step - len(states) + 1, self.dt, states)

    # lane geometry ----------------------------------------------------

    def home_lane(self, vehicle: SimVehicle) -> int:
        if vehicle.lane_change is not None:
            return vehicle.lane_change.target_lane
        return self.road.lane_of(vehicle.state.y)

    def in_lane(self, vehicle: SimVehicle, lane: int) -> bool:
        overlap = self.road.lane_overlap(vehicle.state.y, vehicle.geometry.width, lane)
        return overlap >= self.overlap_threshold - 1e-12

    def occupied_lanes(self, vehicle: SimVehicle) -> List[int]:
        return [lane for lane in range(self.road.lane_count) if self.in_lane(vehicle, lane)]

    def leader_in_lane(self, vehicle: SimVehicle, lane: int, exclude: Tuple[int, ...] = ()) -> Tuple[Optional[SimVehicle], Optional[float]]:
        """Nearest vehicle in ``lane`` whose centre is ahead of ``vehicle``'s front bumper."""
        best, best_gap = None, None
        for other in self.vehicles:
            if other is vehicle or other.vehicle_id in exclude or not self.in_lane(other, lane):
                continue
            if other.state.x <= vehicle.front:
                continue
            gap = other.rear - vehicle.front
            if best is None or other.state.x < best.state.x:
                best, best_gap = other, gap
        return best, best_gap

    def follower_in_lane(self, vehicle: SimVehicle, lane: int, exclude: Tuple[int, ...] = ()) -> Tuple[Optional[SimVehicle], Optional[float]]:
        """Nearest vehicle in ``lane`` whose front bumper is behind ``vehicle``'s centre."""
        best, best_gap = None, None
        for other in self.vehicles:
            if other is vehicle or other.vehicle_id in exclude or not self.in_lane(other, lane):
                continue
            if other.front >= vehicle.state.x:
                continue
            gap = vehicle.rear - other.front
            if best is None or other.state.x > best.state.x:
                best, best_gap = other, gap
        return best, best_gap

    def leader(self, vehicle: SimVehicle) -> Tuple[Optional[SimVehicle], Optional[float]]:
        """Closest leader over every lane the vehicle currently occupies."""
        best, best_gap = None, None
        lanes = self.occupied_lanes(vehicle) or [self.road.lane_of(vehicle.state.y)]
        for lane in lanes:
            other, gap = self.leader_in_lane(vehicle, lane)
            if other is not None and (best is None or other.state.x < best.state.x):
                best, best_gap = other, gap
        return best, best_gap


def vehicle_accel(world: WorldState, vehicle: SimVehicle) -> float:
    if vehicle.stationary:
        return 0.0
    leader, gap = world.leader(vehicle)
    if leader is None:
        return idm_accel(vehicle.state.v, None, None, vehicle.params)
    return idm_accel(vehicle.state.v, leader.state.v, gap, vehicle.params)


def _accel_behind(follower: SimVehicle, leader: Optional[SimVehicle], gap: Optional[float]) -> float:
    if follower.stationary:
        return 0.0
    if leader is None:
        return idm_accel(follower.state.v, None, None, follower.params)
    return idm_accel(follower.state.v, leader.state.v, gap, follower.params)


def mobil_decide(vehicle_id: int, world: WorldState) -> LaneDecision:
    """
    MOBIL lane-change decision for one vehicle.

    A side is eligible when the vehicle fits between the new leader and follower, the new
    follower would not need to brake harder than ``b_safe`` and the politeness-weighted
    incentive exceeds the threshold. Equal incentives on both sides resolve to staying.
    """
    c = world.vehicle(vehicle_id)
    if c.stationary or c.lane_change is not None:
        return LaneDecision.STAY
    lane = world.road.lane_of(c.state.y)
    p = c.params

    leader, gap = world.leader_in_lane(c, lane)
    a_c = _accel_behind(c, leader, gap)
    old_follower, old_gap = world.follower_in_lane(c, lane)
    a_o = tilde_a_o = 0.0
    if old_follower is not None:
        a_o = _accel_behind(old_follower, c, old_gap)
        new_lead_o, new_gap_o = world.leader_in_lane(old_follower, lane, exclude=(c.vehicle_id,))
        tilde_a_o = _accel_behind(old_follower, new_lead_o, new_gap_o)

    incentives: Dict[LaneDecision, float] = {}
    for decision in (LaneDecision.LEFT, LaneDecision.RIGHT):
        target = lane + decision.lane_offset
        if not world.road.has_lane(target):
            continue
        new_leader, front_gap = world.leader_in_lane(c, target)
        new_follower, back_gap = world.follower_in_lane(c, target)
        if _blocked(world, c, target):
            continue
        if (front_gap is not None and front_gap <= 0.0) or (back_gap is not None and back_gap <= 0.0):
            continue
        tilde_a_c = _accel_behind(c, new_leader, front_gap)
        a_n = tilde_a_n = 0.0
        if new_follower is not None:
            tilde_a_n = _accel_behind(new_follower, c, back_gap)
            if not new_follower.stationary and tilde_a_n < -p.b_safe:
                continue
            lead_n, gap_n = world.leader_in_lane(new_follower, target, exclude=(c.vehicle_id,))
            a_n = _accel_behind(new_follower, lead_n, gap_n)
        incentive = tilde_a_c - a_c + p.politeness * ((tilde_a_n - a_n) + (tilde_a_o - a_o))
        if incentive > p.threshold:
            incentives[decision] = incentive

    if not incentives:
        return LaneDecision.STAY
    if len(incentives) == 2 and incentives[LaneDecision.LEFT] == incentives[LaneDecision.RIGHT]:
        return LaneDecision.STAY
    return max(incentives, key=incentives.get)


def _blocked(world: WorldState, vehicle: SimVehicle, lane: int) -> bool:
    """True when some vehicle in ``lane`` is alongside ``vehicle`` longitudinally."""
    for other in world.vehicles:
        if other is vehicle or not world.in_lane(other, lane):
            continue
        if other.rear < vehicle.front and other.front > vehicle.rear:
            return True
    return False


def start_lane_change(world: WorldState, vehicle: SimVehicle, decision: LaneDecision) -> None:
    target = world.road.lane_of(vehicle.state.y) + decision.lane_offset
    vehicle.lane_change = LaneChange(
        start_y=vehicle.state.y,
        target_y=world.road.center(target),
        target_lane=target,
        duration=world.lane_change_duration,
    )


def advance_vehicle(world: WorldState, vehicle: SimVehicle, accel: float, dt: float) -> None:
    """Point-mass longitudinal update plus lane-change spline; speed never goes negative."""
    state = vehicle.state
    v_next = state.v + accel * dt
    if v_next < 0.0:
        distance = state.v ** 2 / (2.0 * -accel) if accel < 0.0 else 0.0
        v_next = 0.0
    else:
        distance = state.v * dt + 0.5 * accel * dt * dt
    y, psi = state.y, 0.0
    if vehicle.lane_change is not None:
        maneuver = vehicle.lane_change
        maneuver.elapsed += dt
        y, v_y = maneuver.lateral(maneuver.elapsed)
        psi = math.atan2(v_y, max(v_next, 1e-6)) if v_y else 0.0
        if maneuver.done:
            y, psi = maneuver.target_y, 0.0
            vehicle.lane_change = None
            vehicle.cooldown = world.cooldown
    else:
        vehicle.cooldown = max(vehicle.cooldown - dt, 0.0)
    vehicle.accel = accel
    vehicle.state = VehicleState(x=state.x + distance, y=y, psi=psi, v=v_next)


def _recycle(world: WorldState) -> None:
    ego = world.ego
    if ego is None:
        return
    for vehicle in world.others:
        if vehicle.stationary or vehicle.lane_change is not None:
            continue
        offset = vehicle.state.x - ego.state.x
        if -world.recycle_behind <= offset <= world.recycle_ahead:
            continue
        lane = int(world.rng.integers(world.road.lane_count))
        params = sample_driver_params(world.rng, world.ranges)
        x = ego.state.x + (world.recycle_ahead - 10.0 if offset < 0 else -world.recycle_behind + 10.0)
        candidate = VehicleState(x=x, y=world.road.center(lane), psi=0.0, v=min(vehicle.state.v, params.v0))
        clear = all(
            abs(other.state.x - x) > other.geometry.length + params.s0
            for other in world.vehicles
            if other is not vehicle and world.in_lane(other, lane)
        )
        if clear:
            logger.debug("Recycling vehicle %d to x=%.1f lane %d", vehicle.vehicle_id, x, lane)
            vehicle.state = candidate
            vehicle.params = params
            vehicle.nominal = DriverParams.nominal(world.ranges)
            world.history[vehicle.vehicle_id] = deque([candidate], maxlen=world.history_length)


def step(world: WorldState, dt: Optional[float] = None, lane_changes: bool = True, record: bool = True) -> WorldState:
    """
    Advance every non-ego, non-stationary vehicle by one period.

    Accelerations and lane-change decisions are computed from the current snapshot before
    any vehicle moves. The world is mutated in place and returned.
    """
    dt = world.dt if dt is None else dt
    movers = [v for v in world.vehicles if not v.is_ego and not v.stationary]
    accels = {v.vehicle_id: vehicle_accel(world, v) for v in movers}
    decisions = {}
    if lane_changes:
        for vehicle in movers:
            if vehicle.lane_change is None and vehicle.cooldown <= 0.0:
                decision = mobil_decide(vehicle.vehicle_id, world)
                if decision != LaneDecision.STAY:
                    decisions[vehicle.vehicle_id] = decision
    for vehicle in movers:
        if vehicle.vehicle_id in decisions:
            start_lane_change(world, vehicle, decisions[vehicle.vehicle_id])
        advance_vehicle(world, vehicle, accels[vehicle.vehicle_id], dt)
    if world.recycle:
        _recycle(world)
    world.step += 1
    if record:
        world.record_history()
    return world
