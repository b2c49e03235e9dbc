"""
Core domain types shared by every module: vehicle states, trajectories, geometry,
motion limits and scenarios, plus scenario JSON and trace CSV helpers.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DimensionError, InputError, ScenarioError

DEFAULT_DT = 0.1
DEFAULT_LANE_WIDTH = 3.75
STATE_DIM = 4

TRACE_COLUMNS = ("step", "vehicle_id", "x", "y", "psi", "v", "a", "delta")


@dataclass(frozen=True)
class VehicleState:
    """State of one vehicle at one time step: position, heading and speed."""

    x: float
    y: float
    psi: float
    v: float

    def __post_init__(self):
        values = (self.x, self.y, self.psi, self.v)
        if not all(math.isfinite(float(value)) for value in values):
            raise ValueError(f"VehicleState fields must be finite, got {values}")
        if self.v < 0.0:
            raise ValueError(f"VehicleState speed must be non-negative, got {self.v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "VehicleState":
        x, y, psi, v = (float(value) for value in values)
        return cls(x=x, y=y, psi=psi, v=v)

    def replace(self, **changes) -> "VehicleState":
        data = {"x": self.x, "y": self.y, "psi": self.psi, "v": self.v}
        data.update(changes)
        return VehicleState(**data)


@dataclass(frozen=True)
class ControlInput:
    """Longitudinal acceleration and front steering angle."""

    a: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.delta)):
            raise ValueError(f"ControlInput fields must be finite, got ({self.a}, {self.delta})")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta], dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """
    Uniformly sampled state sequence.

    Sample ``i`` corresponds to the absolute step ``start_step + i`` and the time
    ``(start_step + i) * dt``. ``states`` is an ``(n, 4)`` array of ``(x, y, psi, v)``
    rows and is stored read-only.
    """

    start_step: int
    dt: float
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.states, dtype=float, copy=True)
        if data.ndim == 1 and data.size == STATE_DIM:
            data = data.reshape(1, STATE_DIM)
        if data.ndim != 2 or data.shape[1] != STATE_DIM:
            raise DimensionError(f"Trajectory states must have shape (n, 4), got {data.shape}")
        if data.shape[0] == 0:
            raise DimensionError("Trajectory must contain at least one state")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise InputError(f"Trajectory dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(data)):
            raise InputError("Trajectory states must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "states", data)
        object.__setattr__(self, "start_step", int(self.start_step))

    @classmethod
    def from_states(cls, start_step: int, dt: float, states: Iterable[VehicleState]) -> "Trajectory":
        rows = [state.as_array() for state in states]
        return cls(start_step=start_step, dt=dt, states=np.array(rows))

    def __len__(self) -> int:
        return self.states.shape[0]

    def __iter__(self) -> Iterator[VehicleState]:
        for i in range(len(self)):
            yield self.state(i)

    def state(self, i: int) -> VehicleState:
        row = self.states[i]
        return VehicleState(x=row[0], y=row[1], psi=row[2], v=max(row[3], 0.0))

    @property
    def end_step(self) -> int:
        return self.start_step + len(self) - 1

    @property
    def times(self) -> np.ndarray:
        return (self.start_step + np.arange(len(self))) * self.dt

    @property
    def x(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def psi(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, 3]

    def window(self, offset: int, count: int) -> "Trajectory":
        """Return ``count`` samples starting at local index ``offset``, padding at constant velocity."""
        if offset < 0 or count < 1:
            raise DimensionError(f"Invalid window offset={offset} count={count}")
        padded = self.padded(offset + count)
        return Trajectory(self.start_step + offset, self.dt, padded.states[offset:offset + count])

    def padded(self, length: int) -> "Trajectory":
        """Extend to ``length`` samples by constant-velocity extrapolation of the last sample."""
        missing = length - len(self)
        if missing <= 0:
            return self
        x, y, psi, v = self.states[-1]
        steps = np.arange(1, missing + 1) * self.dt
        extra = np.column_stack([
            x + v * np.cos(psi) * steps,
            y + v * np.sin(psi) * steps,
            np.full(missing, psi),
            np.full(missing, v),
        ])
        return Trajectory(self.start_step, self.dt, np.vstack([self.states, extra]))


class VehicleGeometry(BaseModel):
    """Rectangular footprint and axle placement of a vehicle."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    length: float = Field(4.0, gt=0.0)
    width: float = Field(1.8, gt=0.0)
    lf: float = Field(1.4, gt=0.0)
    lr: float = Field(1.4, gt=0.0)

    @model_validator(mode="after")
    def _axles_fit(self) -> "VehicleGeometry":
        if self.lf + self.lr > self.length:
            raise ValueError("lf + lr must not exceed the vehicle length")
        return self


class RoadGeometry(BaseModel):
    """Straight multi-lane road. Lane 0 has the smallest lateral centre."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lane_count: int = Field(3, ge=2)
    lane_width: float = Field(DEFAULT_LANE_WIDTH, gt=0.0)
    first_center: float = 0.0

    @property
    def lane_centers(self) -> np.ndarray:
        return self.first_center + self.lane_width * np.arange(self.lane_count)

    @property
    def drivable_interval(self) -> Tuple[float, float]:
        half = 0.5 * self.lane_width
        return (self.first_center - half, self.first_center + (self.lane_count - 1) * self.lane_width + half)

    def center(self, lane: int) -> float:
        if not self.has_lane(lane):
            raise InputError(f"Lane {lane} does not exist on a {self.lane_count}-lane road")
        return float(self.first_center + lane * self.lane_width)

    def has_lane(self, lane: int) -> bool:
        return 0 <= lane < self.lane_count

    def lane_of(self, y: float) -> int:
        """Index of the lane whose centre is nearest to ``y``."""
        index = int(round((y - self.first_center) / self.lane_width))
        return min(max(index, 0), self.lane_count - 1)

    def lane_overlap(self, y: float, width: float, lane: int) -> float:
        """Lateral overlap of a footprint centred at ``y`` with ``lane``, as a fraction of ``width``."""
        center = self.first_center + lane * self.lane_width
        low = max(y - 0.5 * width, center - 0.5 * self.lane_width)
        high = min(y + 0.5 * width, center + 0.5 * self.lane_width)
        return max(high - low, 0.0) / width

    def contains(self, y: float, width: float = 0.0) -> bool:
        low, high = self.drivable_interval
        return low + 0.5 * width - 1e-9 <= y <= high - 0.5 * width + 1e-9


class MotionLimits(BaseModel):
    """
    State, control, control-rate and profile limits.

    Lateral state bounds default to the drivable interval shrunk by half the vehicle
    width; ``x`` is unbounded. Rate limits are per planner step.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    y_min: Optional[float] = None
    y_max: Optional[float] = None
    psi_min: float = -0.5
    psi_max: float = 0.5
    v_min: float = 0.0
    v_max: float = 33.0
    a_min: float = -6.0
    a_max: float = 4.0
    delta_min: float = -0.5
    delta_max: float = 0.5
    da_min: float = -3.0
    da_max: float = 3.0
    ddelta_min: float = -0.1
    ddelta_max: float = 0.1
    a_ymax: float = Field(1.0, gt=0.0)
    da_ymax: float = Field(2.0, gt=0.0)
    a_xmax: float = Field(2.0, gt=0.0)
    da_xmax: float = Field(4.0, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "MotionLimits":
        pairs = [
            ("psi", self.psi_min, self.psi_max),
            ("v", self.v_min, self.v_max),
            ("a", self.a_min, self.a_max),
            ("delta", self.delta_min, self.delta_max),
            ("da", self.da_min, self.da_max),
            ("ddelta", self.ddelta_min, self.ddelta_max),
        ]
        if self.y_min is not None and self.y_max is not None:
            pairs.append(("y", self.y_min, self.y_max))
        for name, low, high in pairs:
            if not low < high:
                raise ValueError(f"{name}_min must be strictly less than {name}_max")
        return self

    def state_bounds(self, road: RoadGeometry, geometry: VehicleGeometry) -> Tuple[np.ndarray, np.ndarray]:
        low, high = road.drivable_interval
        y_min = self.y_min if self.y_min is not None else low + 0.5 * geometry.width
        y_max = self.y_max if self.y_max is not None else high - 0.5 * geometry.width
        lower = np.array([-np.inf, y_min, self.psi_min, self.v_min])
        upper = np.array([np.inf, y_max, self.psi_max, self.v_max])
        return lower, upper

    @property
    def control_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array([self.a_min, self.delta_min]), np.array([self.a_max, self.delta_max])

    @property
    def rate_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array([self.da_min, self.ddelta_min]), np.array([self.da_max, self.ddelta_max])


class DriverParamRanges(BaseModel):
    """Uniform sampling ranges of IDM and MOBIL driver parameters, as ``[low, high]`` pairs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    v0: Tuple[float, float] = (18.0, 25.0)
    T: Tuple[float, float] = (1.0, 1.8)
    s0: Tuple[float, float] = (2.0, 4.0)
    a_idm: Tuple[float, float] = (1.0, 2.0)
    b_idm: Tuple[float, float] = (1.5, 2.5)
    delta_idm: Tuple[float, float] = (4.0, 4.0)
    politeness: Tuple[float, float] = (0.2, 0.5)
    threshold: Tuple[float, float] = (0.1, 0.1)
    b_safe: Tuple[float, float] = (4.0, 4.0)

    @field_validator("*")
    @classmethod
    def _non_empty(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not (math.isfinite(low) and math.isfinite(high)) or low > high:
            raise ValueError(f"range {value} is empty")
        return value

    @classmethod
    def fixed(cls, **values: float) -> "DriverParamRanges":
        """Degenerate ranges pinned to the given values, midpoints elsewhere."""
        base = cls()
        data = {name: (value, value) for name, value in values.items()}
        for name in cls.model_fields:
            if name not in data:
                low, high = getattr(base, name)
                mid = 0.5 * (low + high)
                data[name] = (mid, mid)
        return cls(**data)


class VehicleSpec(BaseModel):
    """Initial condition of one vehicle in a scenario."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    state: VehicleState
    geometry: VehicleGeometry = VehicleGeometry()
    driver: Optional[DriverParamRanges] = None
    stationary: bool = False


class Scenario(BaseModel):
    """Road, ego vehicle and surrounding traffic at t = 0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "scenario"
    road: RoadGeometry = RoadGeometry()
    ego: VehicleSpec
    others: List[VehicleSpec] = Field(default_factory=list)
    seed: int = 0
    duration: float = Field(20.0, gt=0.0)
    dt: float = Field(DEFAULT_DT, gt=0.0)
    recycle: bool = False

    @model_validator(mode="after")
    def _valid_initial_state(self) -> "Scenario":
        from .occupancy import occupancy_polytope, rect_distance

        vehicles = [self.ego] + list(self.others)
        for i, spec in enumerate(vehicles):
            if not self.road.contains(spec.state.y, spec.geometry.width):
                raise ScenarioError(f"Vehicle {i} starts outside the drivable region (y={spec.state.y:.2f})")
        polytopes = [occupancy_polytope(spec.state, spec.geometry) for spec in vehicles]
        for i in range(len(polytopes)):
            for j in range(i + 1, len(polytopes)):
                if abs(vehicles[i].state.x - vehicles[j].state.x) > 20.0:
                    continue
                if rect_distance(polytopes[i], polytopes[j]) <= 0.0:
                    raise ScenarioError(f"Vehicles {i} and {j} overlap at t=0")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))


def resample(traj: Trajectory, dt_new: float) -> Trajectory:
    """
    Resample a trajectory to a commensurate period.

    ``x``, ``y`` and ``v`` are interpolated linearly and ``psi`` along its unwrapped
    angle. Both endpoints are kept.

    Raises:
        InputError: If ``dt_new`` is neither an integer multiple nor an integer divisor of
            ``traj.dt``, or the trajectory span or start does not land on the new grid.
    """
    if not dt_new > 0.0:
        raise InputError(f"dt_new must be positive, got {dt_new}")
    ratio = traj.dt / dt_new
    if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
        factor = int(round(ratio))
        start_step = traj.start_step * factor
        count = (len(traj) - 1) * factor + 1
    else:
        inverse = dt_new / traj.dt
        if abs(inverse - round(inverse)) > 1e-9:
            raise InputError(f"dt_new={dt_new} is not commensurate with dt={traj.dt}")
        factor = int(round(inverse))
        if (len(traj) - 1) % factor or traj.start_step % factor:
            raise InputError(f"Trajectory span does not land on the dt_new={dt_new} grid")
        start_step = traj.start_step // factor
        count = (len(traj) - 1) // factor + 1
    if count == len(traj) and abs(dt_new - traj.dt) < 1e-12:
        return Trajectory(traj.start_step, traj.dt, traj.states)

    t_old = np.arange(len(traj)) * traj.dt
    t_new = np.linspace(0.0, t_old[-1], count)
    psi = np.unwrap(traj.psi)
    columns = [
        np.interp(t_new, t_old, traj.x),
        np.interp(t_new, t_old, traj.y),
        np.interp(t_new, t_old, psi),
        np.interp(t_new, t_old, traj.v),
    ]
    return Trajectory(start_step, dt_new, np.column_stack(columns))


def load_scenario(path: Path) -> Scenario:
    """Load a scenario JSON file."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ScenarioError(f"Scenario file not found: {path}")
    except json.JSONDecodeError as e:
        raise ScenarioError(f"Scenario file {path} is not valid JSON: {e}")
    try:
        return Scenario.model_validate(data)
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError(f"Scenario file {path} is invalid: {e}")


def save_scenario(scenario: Scenario, path: Path) -> Path:
    """Write a scenario as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(scenario.model_dump_json(indent=2))
    return path


def write_trace_csv(path: Path, rows: Iterable[Sequence[float]]) -> Path:
    """Write trace rows ``(step, vehicle_id, x, y, psi, v, a, delta)``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for step, vehicle_id, *values in rows:
            writer.writerow([int(step), int(vehicle_id)] + [repr(float(value)) for value in values])
    return path


def read_trace_csv(path: Path) -> List[dict]:
    """Read a trace CSV back as dictionaries with numeric values."""
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        records = []
        for row in reader:
            record = {name: float(row[name]) for name in TRACE_COLUMNS}
            record["step"] = int(record["step"])
            record["vehicle_id"] = int(record["vehicle_id"])
            records.append(record)
    return records
