"""
Reference trajectory generation from trapezoidal acceleration profiles.

A lane change uses a positive trapezoid of lateral acceleration followed by its
negative mirror image, so lateral speed and acceleration both return to zero. Speed
changes use a single trapezoid. Both are evaluated in closed form from their
piecewise-constant jerk.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .core import MotionLimits, RoadGeometry, Trajectory, VehicleState
from .errors import ProfileError

logger = logging.getLogger(__name__)


class LateralAction(str, Enum):
    LEFT = "LEFT"
    KEEP = "KEEP"
    RIGHT = "RIGHT"

    @property
    def lane_offset(self) -> int:
        return {"LEFT": 1, "KEEP": 0, "RIGHT": -1}[self.value]


class SpeedMode(str, Enum):
    ACCELERATE = "ACCELERATE"
    KEEP_SPEED = "KEEP_SPEED"
    DECELERATE = "DECELERATE"


@dataclass(frozen=True)
class LongitudinalOption:
    mode: SpeedMode
    v_x1: float


class RefgenParams(BaseModel):
    """Decision-set construction parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dv_dec: float = Field(3.0, gt=0.0)
    horizon: float = Field(6.0, gt=0.0)
    dt: float = Field(0.1, gt=0.0)
    center_tolerance: float = Field(1e-3, ge=0.0)

    @property
    def samples(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class TrapezoidTimestamps:
    """
    Breakpoints of a trapezoidal acceleration profile.

    Lateral profiles carry ``t1..t5`` and longitudinal ones ``t6..t8`` in ``values``.
    ``peak`` is the plateau acceleration actually reached, which is below the limit
    when the profile is degenerate (triangular).
    """

    values: Tuple[float, ...]
    peak: float
    degenerate: bool
    lateral: bool

    @property
    def duration(self) -> float:
        return self.values[-1] if self.values else 0.0

    def _at(self, index: int, lateral: bool) -> float:
        return self.values[index] if self.lateral == lateral else math.nan

    @property
    def t1(self) -> float:
        return self._at(0, True)

    @property
    def t2(self) -> float:
        return self._at(1, True)

    @property
    def t3(self) -> float:
        return self._at(2, True)

    @property
    def t4(self) -> float:
        return self._at(3, True)

    @property
    def t5(self) -> float:
        return self._at(4, True)

    @property
    def t6(self) -> float:
        return self._at(0, False)

    @property
    def t7(self) -> float:
        return self._at(1, False)

    @property
    def t8(self) -> float:
        return self._at(2, False)


@dataclass(frozen=True)
class ProfileSamples:
    t: np.ndarray
    jerk: np.ndarray
    a: np.ndarray
    v: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class DecisionCandidate:
    """
    One lateral action combined with one longitudinal option.

    ``reference`` starts at the live ego state. ``velocity`` holds the generated
    ``(v_x, v_y)`` profile per sample, which starts with zero lateral velocity.
    """

    index: int
    lateral: LateralAction
    longitudinal: LongitudinalOption
    reference: Trajectory
    start_lane: int
    target_lane: int
    lateral_timestamps: Optional[TrapezoidTimestamps] = None
    longitudinal_timestamps: Optional[TrapezoidTimestamps] = None
    velocity: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def is_lane_change(self) -> bool:
        return self.target_lane != self.start_lane

    @property
    def maneuver_duration(self) -> float:
        return self.lateral_timestamps.duration if self.lateral_timestamps is not None else 0.0

    @property
    def label(self) -> str:
        return f"{self.lateral.value}/{self.longitudinal.mode.value}"


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0.0 and math.isfinite(value)):
            raise ProfileError(f"{name} must be positive, got {value}")


def lateral_timestamps(a_ymax: float, da_ymax: float, d_w: float) -> TrapezoidTimestamps:
    """
    Breakpoints of the mirrored double trapezoid covering a lateral displacement ``d_w``.

    When the plateau would be shorter than the ramp the profile becomes triangular with
    a peak reduced so that the displacement is still exactly ``d_w``.
    """
    _require_positive(a_ymax=a_ymax, da_ymax=da_ymax, d_w=d_w)
    t1 = a_ymax / da_ymax
    t2 = -0.5 * t1 + 0.5 * math.sqrt(t1 * t1 + 4.0 * d_w / a_ymax)
    peak = a_ymax
    degenerate = t2 < t1
    if degenerate:
        peak = (0.5 * d_w * da_ymax ** 2) ** (1.0 / 3.0)
        t1 = t2 = peak / da_ymax
    values = (t1, t2, 2.0 * t1 + t2, t1 + 2.0 * t2, 2.0 * t1 + 2.0 * t2)
    return TrapezoidTimestamps(values=values, peak=peak, degenerate=degenerate, lateral=True)


def longitudinal_timestamps(a_xmax: float, da_xmax: float, v_x0: float, v_x1: float) -> TrapezoidTimestamps:
    """Breakpoints of the single trapezoid taking the speed from ``v_x0`` to ``v_x1``."""
    _require_positive(a_xmax=a_xmax, da_xmax=da_xmax)
    change = abs(v_x1 - v_x0)
    if change == 0.0:
        return TrapezoidTimestamps(values=(0.0, 0.0, 0.0), peak=0.0, degenerate=False, lateral=False)
    t6 = a_xmax / da_xmax
    t7 = change / a_xmax
    peak = a_xmax
    degenerate = t7 < t6
    if degenerate:
        peak = math.sqrt(change * da_xmax)
        t6 = t7 = peak / da_xmax
    return TrapezoidTimestamps(values=(t6, t7, t6 + t7), peak=peak, degenerate=degenerate, lateral=False)


def _jerk_segments(ts: TrapezoidTimestamps, jerk: float) -> Tuple[np.ndarray, np.ndarray]:
    if ts.lateral:
        t1, t2, t3, t4, t5 = ts.values
        knots = np.array([0.0, t1, t2, t3, t4, t5])
        jerks = np.array([jerk, 0.0, -jerk, 0.0, jerk])
    else:
        t6, t7, t8 = ts.values
        knots = np.array([0.0, t6, t7, t8])
        jerks = np.array([jerk, 0.0, -jerk])
    return knots, jerks


def integrate_jerk(knots: np.ndarray, jerks: np.ndarray, times: np.ndarray) -> ProfileSamples:
    """Exact acceleration, speed and position of a piecewise-constant jerk starting from rest."""
    times = np.asarray(times, dtype=float)
    a = np.zeros_like(times)
    v = np.zeros_like(times)
    p = np.zeros_like(times)
    j = np.zeros_like(times)
    a0 = v0 = p0 = 0.0
    for start, end, jerk in zip(knots[:-1], knots[1:], jerks):
        inside = (times >= start) & (times < end)
        tau = times[inside] - start
        j[inside] = jerk
        a[inside] = a0 + jerk * tau
        v[inside] = v0 + a0 * tau + 0.5 * jerk * tau ** 2
        p[inside] = p0 + v0 * tau + 0.5 * a0 * tau ** 2 + jerk * tau ** 3 / 6.0
        span = end - start
        p0 = p0 + v0 * span + 0.5 * a0 * span ** 2 + jerk * span ** 3 / 6.0
        v0 = v0 + a0 * span + 0.5 * jerk * span ** 2
        a0 = a0 + jerk * span
    after = times >= knots[-1]
    tau = times[after] - knots[-1]
    a[after] = a0
    v[after] = v0 + a0 * tau
    p[after] = p0 + v0 * tau + 0.5 * a0 * tau ** 2
    return ProfileSamples(t=times, jerk=j, a=a, v=v, p=p)


def _exact_terminal(ts: TrapezoidTimestamps, samples: ProfileSamples, target: float, lateral: bool) -> ProfileSamples:
    # after the last breakpoint the profile is at rest by construction
    after = samples.t >= ts.duration
    a = samples.a.copy()
    v = samples.v.copy()
    p = samples.p.copy()
    a[after] = 0.0
    if lateral:
        v[after] = 0.0
        p[after] = target
    else:
        v[after] = target
        p[after] = samples.p[after]
    return ProfileSamples(t=samples.t, jerk=samples.jerk, a=a, v=v, p=p)


def lateral_profile(ts: TrapezoidTimestamps, da_ymax: float, dt: float, sign: float = 1.0, times: Optional[np.ndarray] = None) -> ProfileSamples:
    """
    Sample the lateral jerk, acceleration, speed and offset at period ``dt``.

    The samples run from 0 to the end of the manoeuvre inclusive unless explicit
    ``times`` are given. ``sign`` selects the direction of the displacement.
    """
    if times is None:
        count = int(math.ceil(ts.duration / dt - 1e-9)) + 1
        times = np.arange(count) * dt
    jerk = ts.peak / ts.t1 if ts.t1 > 0.0 else da_ymax
    knots, jerks = _jerk_segments(ts, sign * jerk)
    samples = integrate_jerk(knots, jerks, times)
    displacement = sign * ts.peak * ts.t2 * (ts.t1 + ts.t2)
    return _exact_terminal(ts, samples, displacement, lateral=True)


def longitudinal_profile(ts: TrapezoidTimestamps, v_x0: float, v_x1: float, times: np.ndarray) -> ProfileSamples:
    """Longitudinal acceleration, speed and travelled distance at ``times``."""
    times = np.asarray(times, dtype=float)
    if ts.duration == 0.0:
        zeros = np.zeros_like(times)
        return ProfileSamples(t=times, jerk=zeros, a=zeros, v=np.full_like(times, v_x0), p=v_x0 * times)
    sign = 1.0 if v_x1 > v_x0 else -1.0
    jerk = ts.peak / ts.t6
    knots, jerks = _jerk_segments(ts, sign * jerk)
    samples = integrate_jerk(knots, jerks, times)
    shifted = ProfileSamples(
        t=times,
        jerk=samples.jerk,
        a=samples.a,
        v=v_x0 + samples.v,
        p=v_x0 * times + samples.p,
    )
    return _exact_terminal(ts, shifted, v_x1, lateral=False)


def build_reference(
    state: VehicleState,
    lat: LateralAction,
    lon: LongitudinalOption,
    road: RoadGeometry,
    limits: MotionLimits,
    dt: float,
    horizon: float,
    start_step: int = 0,
    index: int = 0,
    center_tolerance: float = 1e-3,
) -> DecisionCandidate:
    """
    Build the reference trajectory of one (lateral action, longitudinal option) pair.

    Positions come from integrating both acceleration profiles twice; speed is the norm of
    the velocity and heading its direction. After the manoeuvre the reference continues
    straight at ``v_x1`` until the horizon.

    Raises:
        ProfileError: If the target lane does not exist or the manoeuvre is longer than
            the horizon.
    """
    start_lane = road.lane_of(state.y)
    target_lane = start_lane + lat.lane_offset
    if not road.has_lane(target_lane):
        raise ProfileError(f"No lane {target_lane} for a {lat.value} action from lane {start_lane}")
    samples = int(round(horizon / dt))
    times = np.arange(samples) * dt

    offset = road.center(target_lane) - state.y
    lat_ts = None
    if abs(offset) > center_tolerance:
        lat_ts = lateral_timestamps(limits.a_ymax, limits.da_ymax, abs(offset))
        if lat_ts.duration > horizon + 1e-9:
            raise ProfileError(f"Lateral manoeuvre of {lat_ts.duration:.2f}s exceeds the {horizon:.2f}s horizon")
        lateral = lateral_profile(lat_ts, limits.da_ymax, dt, sign=math.copysign(1.0, offset), times=times)
        v_y, y = lateral.v, state.y + lateral.p
    else:
        v_y, y = np.zeros(samples), np.full(samples, state.y)

    v_x0 = state.v * math.cos(state.psi)
    lon_ts = longitudinal_timestamps(limits.a_xmax, limits.da_xmax, v_x0, lon.v_x1)
    if lon_ts.duration > horizon + 1e-9:
        raise ProfileError(f"Speed change of {lon_ts.duration:.2f}s exceeds the {horizon:.2f}s horizon")
    longitudinal = longitudinal_profile(lon_ts, v_x0, lon.v_x1, times)
    v_x, x = longitudinal.v, state.x + longitudinal.p

    states = np.column_stack([x, y, np.arctan2(v_y, v_x), np.hypot(v_x, v_y)])
    states[0] = state.as_array()
    return DecisionCandidate(
        index=index,
        lateral=lat,
        longitudinal=lon,
        reference=Trajectory(start_step=start_step, dt=dt, states=states),
        start_lane=start_lane,
        target_lane=target_lane,
        lateral_timestamps=lat_ts,
        longitudinal_timestamps=lon_ts,
        velocity=np.column_stack([v_x, v_y]),
    )


def longitudinal_options(v_x0: float, limits: MotionLimits, dv_dec: float) -> List[LongitudinalOption]:
    options = []
    for mode, delta in ((SpeedMode.ACCELERATE, dv_dec), (SpeedMode.KEEP_SPEED, 0.0), (SpeedMode.DECELERATE, -dv_dec)):
        target = min(max(v_x0 + delta, limits.v_min), limits.v_max)
        if abs(target - v_x0) < 1e-12:
            mode, target = SpeedMode.KEEP_SPEED, v_x0
        options.append(LongitudinalOption(mode=mode, v_x1=target))
    return options


def build_decision_set(
    state: VehicleState,
    road: RoadGeometry,
    limits: MotionLimits,
    params: Optional[RefgenParams] = None,
    start_step: int = 0,
) -> List[DecisionCandidate]:
    """
    Combine lateral actions and longitudinal options into the candidate set.

    Lane changes towards missing lanes are skipped and options whose clamped target speed
    collapses onto another option are kept once. Indices are assigned in a fixed
    (LEFT, KEEP, RIGHT) x (ACCELERATE, KEEP_SPEED, DECELERATE) order.
    """
    params = params or RefgenParams()
    current = road.lane_of(state.y)
    v_x0 = state.v * math.cos(state.psi)
    candidates: List[DecisionCandidate] = []
    seen = set()
    for lat in (LateralAction.LEFT, LateralAction.KEEP, LateralAction.RIGHT):
        if not road.has_lane(current + lat.lane_offset):
            continue
        for lon in longitudinal_options(v_x0, limits, params.dv_dec):
            key = (lat, lon.mode, round(lon.v_x1, 9))
            if key in seen:
                continue
            seen.add(key)
            try:
                candidate = build_reference(
                    state, lat, lon, road, limits, params.dt, params.horizon,
                    start_step=start_step, index=len(candidates),
                    center_tolerance=params.center_tolerance,
                )
            except ProfileError as e:
                logger.debug("Skipping %s/%s: %s", lat.value, lon.mode.value, e.message)
                continue
            candidates.append(candidate)
    return candidates


def candidate_by_label(candidates: Sequence[DecisionCandidate], lateral: LateralAction, mode: SpeedMode) -> Optional[DecisionCandidate]:
    for candidate in candidates:
        if candidate.lateral == lateral and candidate.longitudinal.mode == mode:
            return candidate
    return None
