"""
Built-in scenarios: obstacle avoidance in dense traffic, a three-lane speed contrast and
randomized three-lane traffic.
"""
from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from .core import DriverParamRanges, RoadGeometry, Scenario, VehicleSpec, VehicleState
from .errors import InputError

logger = logging.getLogger(__name__)

DENSITIES = (10.0, 15.0, 20.0)
VEHICLE_LENGTH = 4.0

# case1: the adjacent lane runs bumper to bumper with 7 m gaps, below length + 2 * s0
CASE1_GAP = 7.0
CASE1_SPEED = 4.8
CASE1_DRIVER = DriverParamRanges.fixed(v0=10.0, T=1.0, s0=2.0, threshold=2.0)


def _vehicle(x: float, y: float, v: float, driver: Optional[DriverParamRanges] = None, stationary: bool = False) -> VehicleSpec:
    return VehicleSpec(state=VehicleState(x=x, y=y, psi=0.0, v=v), driver=driver, stationary=stationary)


def case1(seed: int = 0) -> Scenario:
    """Stationary obstacle 60 m ahead of the ego; the only other lane is dense and slow."""
    road = RoadGeometry(lane_count=2)
    spacing = VEHICLE_LENGTH + CASE1_GAP
    others = [_vehicle(60.0, road.center(0), 0.0, stationary=True)]
    for x in np.arange(-80.0, 140.0, spacing):
        others.append(_vehicle(float(x), road.center(1), CASE1_SPEED, CASE1_DRIVER))
    return Scenario(
        name="case1",
        road=road,
        ego=_vehicle(0.0, road.center(0), 10.0),
        others=others,
        seed=seed,
        duration=20.0,
    )


def case2(seed: int = 0) -> Scenario:
    """
    Three lanes with different speeds and gaps: the top lane is fast and tight, the bottom
    lane slow and loose, and the ego starts in the middle lane behind a leader cruising
    at its own speed, well below the desired speed.
    """
    road = RoadGeometry(lane_count=3)
    fast = DriverParamRanges.fixed(v0=22.0, T=1.0, s0=2.0, threshold=2.0)
    middle = DriverParamRanges.fixed(v0=12.0, T=1.0, s0=2.0, threshold=2.0)
    slow = DriverParamRanges.fixed(v0=7.0, T=1.0, s0=2.0, threshold=2.0)
    others = [_vehicle(25.0, road.center(1), 12.0, middle)]
    for x in np.arange(-100.0, 200.0, 40.0):
        others.append(_vehicle(float(x) + 15.0, road.center(2), 20.0, fast))
    for x in np.arange(-120.0, 240.0, 60.0):
        others.append(_vehicle(float(x), road.center(0), 7.0, slow))
    return Scenario(
        name="case2",
        road=road,
        ego=_vehicle(0.0, road.center(1), 12.0),
        others=others,
        seed=seed,
        duration=20.0,
    )


def random3lane(seed: int = 0, density: float = 15.0, duration: float = 30.0, recycle: bool = False,
                behind: float = 150.0, ahead: float = 250.0, min_spacing: float = 25.0) -> Scenario:
    """
    Randomized three-lane traffic with ``density`` vehicles per lane-km around the ego.

    Positions are drawn uniformly in ``[-behind, ahead]`` with at least ``min_spacing``
    between same-lane neighbours and speeds uniformly in 10..20 m/s. Driver parameters
    are sampled later from the default ranges with the same seed.
    """
    if density <= 0.0:
        raise InputError(f"Traffic density must be positive, got {density}")
    rng = np.random.default_rng(seed)
    road = RoadGeometry(lane_count=3)
    ego = _vehicle(0.0, road.center(1), 15.0)
    per_lane = max(int(round(density * (ahead + behind) / 1000.0)), 1)
    others: List[VehicleSpec] = []
    for lane in range(road.lane_count):
        placed: List[float] = [0.0] if lane == 1 else []
        attempts = 0
        while len(placed) < per_lane + (1 if lane == 1 else 0) and attempts < 500:
            attempts += 1
            x = float(rng.uniform(-behind, ahead))
            if all(abs(x - other) >= min_spacing for other in placed):
                placed.append(x)
        if lane == 1:
            placed.remove(0.0)
        if len(placed) < per_lane:
            logger.warning("Placed %d of %d vehicles in lane %d", len(placed), per_lane, lane)
        for x in sorted(placed):
            others.append(_vehicle(x, road.center(lane), float(rng.uniform(10.0, 20.0))))
    return Scenario(
        name=f"random3lane-{seed}-{density:g}",
        road=road,
        ego=ego,
        others=others,
        seed=seed,
        duration=duration,
        recycle=recycle,
    )


def density_for_episode(index: int) -> float:
    return DENSITIES[index % len(DENSITIES)]


BUILTIN: Dict[str, Callable[..., Scenario]] = {
    "case1": case1,
    "case2": case2,
    "random3lane": random3lane,
}


def builtin_scenarios(seed: int = 0, density: float = 15.0) -> Dict[str, Scenario]:
    """Instantiate every built-in scenario."""
    return {
        "case1": case1(seed),
        "case2": case2(seed),
        "random3lane": random3lane(seed, density),
    }
