"""
Tests for IDM, MOBIL and background traffic stepping.
"""
import numpy as np
import pytest

from cooplane.core import DriverParamRanges, RoadGeometry, Scenario, VehicleGeometry, VehicleSpec, VehicleState
from cooplane.errors import InputError
from cooplane.scenarios import random3lane
from cooplane.traffic import (
    B_MAX,
    DriverParams,
    LaneChange,
    LaneDecision,
    SimVehicle,
    WorldState,
    advance_vehicle,
    idm_accel,
    mobil_decide,
    sample_driver_params,
    start_lane_change,
    step,
)


def _vehicle(vehicle_id, x, y, v, params=None, stationary=False, is_ego=False):
    return SimVehicle(
        vehicle_id=vehicle_id,
        state=VehicleState(x, y, 0.0, v),
        geometry=VehicleGeometry(),
        params=params or DriverParams(),
        stationary=stationary,
        is_ego=is_ego,
    )


def _world(vehicles, lane_count=2, recycle=False):
    return WorldState(
        step=0,
        dt=0.1,
        road=RoadGeometry(lane_count=lane_count),
        vehicles=vehicles,
        rng=np.random.default_rng(0),
        recycle=recycle,
    )


def test_driver_params_validation():
    with pytest.raises(InputError):
        DriverParams(politeness=2.0)
    with pytest.raises(InputError):
        DriverParams(T=0.0)


def test_idm_free_road():
    """Alone on the road a driver accelerates at a_idm from rest and cruises at v0."""
    params = DriverParams()
    assert idm_accel(0.0, None, None, params) == pytest.approx(params.a_idm)
    assert idm_accel(params.v0, None, None, params) == pytest.approx(0.0)


def test_idm_emergency_braking():
    """Closing fast on a short gap saturates at the emergency deceleration."""
    params = DriverParams()
    assert idm_accel(30.0, 0.0, 1.0, params) == -B_MAX
    assert idm_accel(10.0, 10.0, 0.0, params) == -B_MAX
    assert idm_accel(10.0, 10.0, -1.0, params) == -B_MAX


def test_idm_never_exceeds_a_idm():
    params = DriverParams()
    assert idm_accel(0.0, 30.0, 200.0, params) <= params.a_idm


def test_idm_stops_behind_stationary_obstacle():
    """Approaching a standing obstacle the follower slows to a halt at about s0."""
    params = DriverParams(v0=15.0)
    follower = _vehicle(1, 0.0, 0.0, 15.0, params)
    obstacle = _vehicle(2, 100.0, 0.0, 0.0, stationary=True)
    world = _world([follower, obstacle])
    speeds = []
    for _ in range(600):
        step(world, lane_changes=False, record=False)
        speeds.append(follower.state.v)
    gap = obstacle.rear - follower.front
    assert max(speeds) <= 15.0 + 1e-9
    assert speeds[-1] < 0.5
    assert gap >= 0.9 * params.s0
    assert obstacle.state.x == 100.0


def test_mobil_overtakes_blocked_lane():
    """A standing leader and an empty neighbour lane trigger a change to the left."""
    c = _vehicle(1, 0.0, 0.0, 15.0)
    obstacle = _vehicle(2, 15.0, 0.0, 0.0, stationary=True)
    world = _world([c, obstacle])
    assert mobil_decide(1, world) == LaneDecision.LEFT


def test_mobil_safety_veto():
    """A fast follower in the target lane would have to brake too hard."""
    c = _vehicle(1, 0.0, 0.0, 15.0)
    obstacle = _vehicle(2, 15.0, 0.0, 0.0, stationary=True)
    follower = _vehicle(3, -8.0, 3.75, 20.0)
    world = _world([c, obstacle, follower])
    assert mobil_decide(1, world) == LaneDecision.STAY


def test_mobil_symmetric_incentive_stays():
    """Equal incentives on both sides resolve to staying."""
    c = _vehicle(1, 0.0, 3.75, 15.0)
    obstacle = _vehicle(2, 15.0, 3.75, 0.0, stationary=True)
    world = _world([c, obstacle], lane_count=3)
    assert mobil_decide(1, world) == LaneDecision.STAY


def test_mobil_no_incentive_on_free_road():
    c = _vehicle(1, 0.0, 0.0, 15.0)
    assert mobil_decide(1, _world([c])) == LaneDecision.STAY


def test_lane_change_spline():
    """The lateral transition is a half cosine with zero end speeds."""
    maneuver = LaneChange(start_y=0.0, target_y=3.75, target_lane=1, duration=3.0)
    y_mid, v_mid = maneuver.lateral(1.5)
    assert y_mid == pytest.approx(1.875)
    assert v_mid == pytest.approx(3.75 * np.pi / 6.0)
    assert maneuver.lateral(0.0) == pytest.approx((0.0, 0.0))
    assert maneuver.lateral(3.0) == pytest.approx((3.75, 0.0))


def test_lane_change_completes_with_cooldown():
    """A started lane change lands on the target centre and then blocks MOBIL for a while."""
    c = _vehicle(1, 0.0, 0.0, 15.0, DriverParams(v0=15.0))
    world = _world([c])
    start_lane_change(world, c, LaneDecision.LEFT)
    for _ in range(30):
        step(world, record=False)
    assert c.lane_change is None
    assert c.state.y == pytest.approx(3.75)
    assert c.state.psi == 0.0
    assert c.cooldown == pytest.approx(2.0)
    step(world, record=False)
    assert c.cooldown == pytest.approx(1.9)


def test_advance_vehicle_stops_without_reversing():
    """Braking through zero speed stops at the exact stopping distance."""
    c = _vehicle(1, 0.0, 0.0, 1.0)
    world = _world([c])
    advance_vehicle(world, c, -B_MAX, 0.2)
    assert c.state.v == 0.0
    assert c.state.x == pytest.approx(1.0 / (2.0 * B_MAX))


def test_step_leaves_ego_and_obstacles_alone():
    ego = _vehicle(0, 0.0, 0.0, 10.0, is_ego=True)
    other = _vehicle(1, 30.0, 3.75, 10.0)
    parked = _vehicle(2, 60.0, 0.0, 0.0, stationary=True)
    world = _world([ego, other, parked])
    step(world)
    assert ego.state.x == 0.0
    assert parked.state.x == 60.0
    assert other.state.x > 30.0
    assert world.step == 1


def test_history_is_recorded():
    """Observed trajectories end at the current step."""
    ego = _vehicle(0, 0.0, 0.0, 10.0, is_ego=True)
    other = _vehicle(1, 30.0, 3.75, 10.0)
    world = _world([ego, other])
    for _ in range(3):
        step(world)
    observed = world.observed(1)
    assert len(observed) == 4
    assert observed.start_step == 0
    assert observed.end_step == world.step
    assert observed.x[-1] == pytest.approx(other.state.x)


def test_recycle_moves_vehicle_ahead():
    """A vehicle far behind the ego reappears ahead of it."""
    ego = _vehicle(0, 0.0, 0.0, 10.0, is_ego=True)
    straggler = _vehicle(1, -250.0, 0.0, 5.0)
    world = _world([ego, straggler], recycle=True)
    step(world, record=False)
    assert straggler.state.x == pytest.approx(290.0)
    assert len(world.observed(1)) == 1


def test_from_scenario_samples_params_in_range():
    """Parameters are drawn from the ranges and reproducible per seed."""
    scenario = Scenario(
        ego=VehicleSpec(state=VehicleState(0.0, 0.0, 0.0, 10.0)),
        others=[VehicleSpec(state=VehicleState(30.0 * i, 3.75, 0.0, 10.0)) for i in range(1, 4)],
    )
    ranges = DriverParamRanges(v0=(10.0, 12.0))
    world = WorldState.from_scenario(scenario, seed=3, ranges=ranges)
    again = WorldState.from_scenario(scenario, seed=3, ranges=ranges)
    for vehicle, twin in zip(world.others, again.others):
        assert 10.0 <= vehicle.params.v0 <= 12.0
        assert vehicle.params == twin.params
        assert vehicle.nominal_params.v0 == pytest.approx(11.0)
    assert world.ego.vehicle_id == 0
    assert world.history_length == 21


def test_vehicle_lookup_error():
    with pytest.raises(InputError):
        _world([]).vehicle(5)


def test_sample_driver_params_within_ranges():
    """Draws stay inside their ranges, pinned ranges give their value and a seed repeats the draw."""
    ranges = DriverParamRanges()
    first = sample_driver_params(np.random.default_rng(5), ranges)
    again = sample_driver_params(np.random.default_rng(5), ranges)
    assert first == again
    assert 18.0 <= first.v0 <= 25.0
    assert 1.0 <= first.T <= 1.8
    assert 0.2 <= first.politeness <= 0.5
    assert first.delta == 4.0
    assert first.threshold == 0.1


def test_idm_monotone_in_gap_and_closing_speed():
    """More room never lowers the acceleration; closing faster never raises it."""
    rng = np.random.default_rng(31)
    for _ in range(200):
        params = sample_driver_params(rng)
        v = rng.uniform(0.0, 25.0)
        v_lead = rng.uniform(0.0, 25.0)
        gaps = np.sort(rng.uniform(0.1, 150.0, size=8))
        by_gap = [idm_accel(v, v_lead, gap, params) for gap in gaps]
        assert np.all(np.diff(by_gap) >= -1e-12)
        leads = np.sort(rng.uniform(0.0, 25.0, size=8))
        gap = rng.uniform(0.1, 150.0)
        by_lead = [idm_accel(v, lead, gap, params) for lead in leads]
        assert np.all(np.diff(by_lead) >= -1e-12)


def _mirrored(vehicles, road):
    span = road.center(0) + road.center(road.lane_count - 1)
    return [
        SimVehicle(
            vehicle_id=v.vehicle_id,
            state=VehicleState(v.state.x, span - v.state.y, 0.0, v.state.v),
            geometry=v.geometry,
            params=v.params,
            stationary=v.stationary,
        )
        for v in vehicles
    ]


def test_mobil_decisions_mirror_with_the_road():
    """Reflecting the traffic across the middle lane swaps LEFT and RIGHT and keeps STAY."""
    mirror = {LaneDecision.STAY: LaneDecision.STAY, LaneDecision.LEFT: LaneDecision.RIGHT,
              LaneDecision.RIGHT: LaneDecision.LEFT}
    rng = np.random.default_rng(37)
    seen = set()
    for _ in range(60):
        road = RoadGeometry(lane_count=3)
        xs = rng.permutation(np.arange(12)) * 12.0 + rng.uniform(0.0, 3.0, size=12)
        vehicles = [
            _vehicle(i + 1, float(x), road.center(int(rng.integers(3))), float(rng.uniform(0.0, 20.0)),
                     sample_driver_params(rng), stationary=bool(rng.random() < 0.15))
            for i, x in enumerate(xs)
        ]
        world = _world(vehicles, lane_count=3)
        reflected = _world(_mirrored(vehicles, road), lane_count=3)
        for vehicle in vehicles:
            decision = mobil_decide(vehicle.vehicle_id, world)
            assert mobil_decide(vehicle.vehicle_id, reflected) == mirror[decision]
            seen.add(decision)
    assert LaneDecision.STAY in seen
    assert len(seen) > 1


def test_equal_seeds_step_identically():
    """Two worlds built from the same seed stay bitwise equal, recycling included."""
    scenario = random3lane(seed=8, density=20.0, recycle=True)
    first = WorldState.from_scenario(scenario, seed=8)
    second = WorldState.from_scenario(scenario, seed=8)
    for _ in range(150):
        step(first)
        step(second)
        assert [v.state for v in first.vehicles] == [v.state for v in second.vehicles]
        assert [v.params for v in first.vehicles] == [v.params for v in second.vehicles]


def test_sample_driver_params_mean_is_the_midpoint():
    ranges = DriverParamRanges()
    rng = np.random.default_rng(41)
    draws = [sample_driver_params(rng, ranges) for _ in range(4000)]
    nominal = DriverParams.nominal(ranges)
    for name, (low, high) in [("v0", ranges.v0), ("T", ranges.T), ("s0", ranges.s0), ("a_idm", ranges.a_idm),
                              ("b_idm", ranges.b_idm), ("politeness", ranges.politeness)]:
        mean = np.mean([getattr(d, name) for d in draws])
        assert mean == pytest.approx(getattr(nominal, name), abs=0.03 * (high - low))
