"""
Tests for constant-velocity and interactive prediction.
"""
import numpy as np
import pytest

from cooplane.core import MotionLimits, RoadGeometry, VehicleGeometry, VehicleState
from cooplane.errors import DimensionError
from cooplane.predict import (
    PredictionRequest,
    PredictorKind,
    RuleBasedReactionModel,
    get_predictor,
    predict_constant_velocity,
    predict_interactive,
)
from cooplane.refgen import LateralAction, LongitudinalOption, SpeedMode, build_reference
from cooplane.traffic import DriverParams, SimVehicle, WorldState, step


ROAD = RoadGeometry(lane_count=2)


def _vehicle(vehicle_id, x, y, v, params=None, is_ego=False):
    return SimVehicle(
        vehicle_id=vehicle_id,
        state=VehicleState(x, y, 0.0, v),
        geometry=VehicleGeometry(),
        params=params or DriverParams(),
        is_ego=is_ego,
    )


def _world(*others, ego_v=15.0):
    vehicles = [_vehicle(0, 0.0, 0.0, ego_v, is_ego=True)] + list(others)
    return WorldState(step=0, dt=0.1, road=ROAD, vehicles=vehicles, rng=np.random.default_rng(0))


def _candidate(world, lateral=LateralAction.KEEP, horizon=6.0, start_step=0):
    ego = world.ego.state
    return build_reference(
        ego, lateral, LongitudinalOption(SpeedMode.KEEP_SPEED, ego.v), ROAD, MotionLimits(),
        dt=0.1, horizon=horizon, start_step=start_step,
    )


def test_constant_velocity_extrapolates():
    """Constant-velocity prediction ignores the candidate and keeps each speed."""
    world = _world(_vehicle(1, 20.0, 3.75, 10.0))
    result = predict_constant_velocity(PredictionRequest.from_world(_candidate(world, start_step=5), world))
    traj = result.trajectories[1]
    assert result.kind == PredictorKind.CONSTANT_VELOCITY
    assert len(traj) == 60
    assert traj.start_step == 5
    assert traj.x == pytest.approx(20.0 + np.arange(60))
    assert np.all(traj.y == 3.75)


def test_horizon_longer_than_reference():
    world = _world()
    with pytest.raises(DimensionError):
        PredictionRequest(candidate=_candidate(world), world=world, horizon=61)


def test_interactive_leaves_snapshot_untouched():
    """The rollout runs on a copy of the world."""
    other = _vehicle(1, 20.0, 3.75, 10.0)
    world = _world(other)
    before = [v.state for v in world.vehicles]
    result = predict_interactive(PredictionRequest.from_world(_candidate(world, LateralAction.LEFT), world))
    assert [v.state for v in world.vehicles] == before
    assert world.step == 0
    assert result.trajectories[1].states[0] == pytest.approx(other.state.as_array())


def test_interactive_matches_constant_velocity_without_interaction():
    """A cruising vehicle far from the ego is predicted the same way by both predictors."""
    world = _world(_vehicle(1, 500.0, 3.75, 10.0, DriverParams(v0=10.0)))
    req = PredictionRequest.from_world(_candidate(world), world)
    interactive = predict_interactive(req)
    constant = predict_constant_velocity(req)
    assert interactive.trajectories[1].states == pytest.approx(constant.trajectories[1].states, abs=1e-9)


def test_interactive_follower_yields_to_merging_ego():
    """A follower in the target lane brakes for the merging ego and keeps a safe gap."""
    follower = _vehicle(1, -12.0, 3.75, 17.0, DriverParams(v0=17.0))
    world = _world(follower)
    candidate = _candidate(world, LateralAction.LEFT)
    result = predict_interactive(PredictionRequest.from_world(candidate, world),
                                 RuleBasedReactionModel(lane_changes=False))
    traj = result.trajectories[1]
    gaps = (candidate.reference.x - 2.0) - (traj.x + 2.0)
    assert traj.v.max() <= 17.0 + 1e-9
    assert traj.v.min() < 16.0
    assert np.all(gaps > 0.0)
    assert gaps[-1] >= 3.0


def test_constant_velocity_follower_ignores_merge():
    follower = _vehicle(1, -12.0, 3.75, 17.0, DriverParams(v0=17.0))
    world = _world(follower)
    result = predict_constant_velocity(PredictionRequest.from_world(_candidate(world, LateralAction.LEFT), world))
    assert np.all(result.trajectories[1].v == 17.0)


def test_window_at_pads_past_the_end():
    world = _world(_vehicle(1, 20.0, 3.75, 10.0))
    result = predict_constant_velocity(PredictionRequest.from_world(_candidate(world, horizon=2.0), world))
    window = result.window_at(15, 10)
    assert window.trajectories[1].start_step == 15
    assert window.trajectories[1].x == pytest.approx(35.0 + np.arange(10))


def test_get_predictor():
    world = _world(_vehicle(1, 20.0, 3.75, 10.0))
    req = PredictionRequest.from_world(_candidate(world), world)
    assert get_predictor("constant_velocity")(req).kind == PredictorKind.CONSTANT_VELOCITY
    assert get_predictor(PredictorKind.INTERACTIVE)(req).kind == PredictorKind.INTERACTIVE
    with pytest.raises(ValueError):
        get_predictor("oracle")


def test_interactive_equals_direct_rollout_with_pinned_ego():
    """The interactive predictor is exactly traffic.step with the ego placed on the reference."""
    world = _world(
        _vehicle(1, -12.0, 3.75, 17.0, DriverParams(v0=17.0)),
        _vehicle(2, 25.0, 0.0, 9.0, DriverParams(v0=9.0)),
        _vehicle(3, 40.0, 3.75, 12.0),
    )
    candidate = _candidate(world, LateralAction.LEFT)
    result = predict_interactive(PredictionRequest.from_world(candidate, world))

    direct = world.copy()
    rows = {v.vehicle_id: [v.state.as_array()] for v in direct.others}
    for k in range(1, len(candidate.reference)):
        direct.set_ego_state(candidate.reference.state(k))
        step(direct)
        for vehicle in direct.others:
            rows[vehicle.vehicle_id].append(vehicle.state.as_array())
    for vehicle_id, states in rows.items():
        assert np.array_equal(result.trajectories[vehicle_id].states, np.array(states))


def test_cooperating_follower_opens_a_gap_only_under_interaction():
    """Constant velocity runs the follower into the merging ego; interaction keeps them apart."""
    follower = _vehicle(1, -12.0, 3.75, 17.0, DriverParams(v0=17.0))
    world = _world(follower)
    candidate = _candidate(world, LateralAction.LEFT)
    req = PredictionRequest.from_world(candidate, world)
    ego_rear = candidate.reference.x - 2.0
    model = RuleBasedReactionModel(lane_changes=False)
    interactive = ego_rear - (predict_interactive(req, model).trajectories[1].x + 2.0)
    constant = ego_rear - (predict_constant_velocity(req).trajectories[1].x + 2.0)
    assert constant.min() < 0.0
    assert interactive.min() > 0.0
    assert np.all(interactive >= constant - 1e-9)
