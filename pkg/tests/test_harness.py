"""
Tests for closed-loop episodes, batches and summaries.
"""
import json
import math
from unittest.mock import patch

import numpy as np
import pytest

from cooplane.core import RoadGeometry, Scenario, VehicleGeometry, VehicleSpec, VehicleState, save_scenario
from cooplane.errors import InputError
from cooplane.harness import (
    FAR_DISTANCE,
    EpisodeConfig,
    EpisodeMetrics,
    EpisodeResult,
    Policy,
    batch_configs,
    builtin_scenarios,
    min_oracle_distance,
    proposed_collided,
    resolve_scenario,
    run_batch,
    run_episode,
    summarize,
)
from cooplane.predict import PredictorKind
from cooplane.scenarios import DENSITIES, case2
from cooplane.traffic import DriverParams, SimVehicle, WorldState

ROAD = RoadGeometry(lane_count=2)


def _metrics(policy=Policy.PROPOSED, seed=0, ego_speed=15.0, collision=False, lane_changes=1):
    return EpisodeMetrics(
        scenario="random3lane",
        policy=policy,
        seed=seed,
        density=15.0,
        steps=300,
        ego_mean_speed=ego_speed,
        others_mean_speed=14.0,
        final_speed=ego_speed,
        min_distance=0.0 if collision else 3.0,
        collision=collision,
        lane_changes=lane_changes,
        final_lane=1,
        solver_failures=0,
        decisions=30,
    )


def _world(*others):
    ego = SimVehicle(0, VehicleState(0.0, 0.0, 0.0, 10.0), VehicleGeometry(), DriverParams(), is_ego=True)
    return WorldState(step=0, dt=0.1, road=ROAD, vehicles=[ego] + list(others), rng=np.random.default_rng(0))


def _other(vehicle_id, x, y=0.0):
    return SimVehicle(vehicle_id, VehicleState(x, y, 0.0, 10.0), VehicleGeometry(), DriverParams())


def test_policy_predictors():
    assert Policy.PROPOSED.predictor == PredictorKind.INTERACTIVE
    assert Policy.PROPOSED_WO_IP.predictor == PredictorKind.CONSTANT_VELOCITY
    assert Policy.IDM_MOBIL.predictor is None


def test_min_oracle_distance():
    """Only vehicles within reach count; with none the distance is infinite."""
    assert min_oracle_distance(_world(_other(1, 10.0), _other(2, 20.0, 3.75))) == pytest.approx(6.0)
    assert math.isinf(min_oracle_distance(_world(_other(1, 50.0))))


def test_resolve_builtin_scenario():
    scenario = resolve_scenario(EpisodeConfig(scenario="case1", duration=2.0))
    assert scenario.name == "case1"
    assert scenario.steps == 20


def test_resolve_random_scenario_uses_density():
    scenario = resolve_scenario(EpisodeConfig(scenario="random3lane", seed=3, density=10.0, recycle=True))
    assert scenario.name == "random3lane-3-10"
    assert scenario.recycle


def test_resolve_scenario_file(tmp_path):
    path = save_scenario(case2(), tmp_path / "case2.json")
    scenario = resolve_scenario(EpisodeConfig(scenario=str(path)))
    assert scenario.name == "case2"
    assert scenario.road.lane_count == 3


def test_resolve_unknown_scenario():
    with pytest.raises(ValueError, match="Unknown scenario"):
        resolve_scenario(EpisodeConfig(scenario="case9"))


def test_batch_configs_are_paired():
    """Every policy sees the same seeds and densities per episode index."""
    configs = batch_configs(4, [Policy.PROPOSED, Policy.IDM_MOBIL], seed_base=100)
    assert len(configs) == 8
    proposed = [(i, c.seed, c.density) for i, c in configs if c.policy == Policy.PROPOSED]
    baseline = [(i, c.seed, c.density) for i, c in configs if c.policy == Policy.IDM_MOBIL]
    assert proposed == baseline
    assert [seed for _, seed, _ in proposed] == [100, 101, 102, 103]
    assert [density for _, _, density in proposed] == [DENSITIES[0], DENSITIES[1], DENSITIES[2], DENSITIES[0]]
    assert all(c.scenario == "random3lane" and c.recycle for _, c in configs)


def test_batch_configs_explicit_densities():
    configs = batch_configs(3, [Policy.PROPOSED], seed_base=0, densities=[12.0])
    assert [c.density for _, c in configs] == [12.0, 12.0, 12.0]


def test_batch_needs_an_episode():
    with pytest.raises(InputError):
        batch_configs(0, [Policy.PROPOSED], seed_base=0)


def test_summarize_reports_improvement():
    metrics = [
        _metrics(Policy.IDM_MOBIL, seed=0, ego_speed=14.0),
        _metrics(Policy.PROPOSED, seed=0, ego_speed=16.0),
        _metrics(Policy.PROPOSED, seed=1, ego_speed=16.0, lane_changes=3),
        _metrics(Policy.IDM_MOBIL, seed=1, ego_speed=14.0, collision=True),
    ]
    summaries = summarize(metrics)
    assert [s.policy for s in summaries] == [Policy.PROPOSED, Policy.IDM_MOBIL]
    proposed, baseline = summaries
    assert proposed.episodes == 2
    assert proposed.lane_changes == pytest.approx(2.0)
    assert proposed.improvement_pct is None
    assert baseline.improvement_pct == pytest.approx(100.0 * 2.0 / 14.0)
    assert baseline.collisions == 1
    assert baseline.min_distance == 0.0


def test_proposed_collided():
    assert not proposed_collided([_metrics(Policy.IDM_MOBIL, collision=True), _metrics()])
    assert proposed_collided([_metrics(collision=True)])


def test_short_rule_based_episode():
    """The IDM/MOBIL baseline records every vehicle at every step and makes no MPC decisions."""
    result = run_episode(EpisodeConfig(scenario="case1", policy=Policy.IDM_MOBIL, duration=1.0))
    metrics = result.metrics
    vehicles = len({row[1] for row in result.trace})
    assert metrics.steps == 10
    assert len(result.trace) == 11 * vehicles
    assert metrics.decisions == 0
    assert result.plan_log == []
    assert not metrics.collision


def test_short_planned_episode_on_empty_road():
    """On an empty road the planner keeps the lane and nothing comes within reach."""
    scenario = Scenario(
        name="empty",
        road=ROAD,
        ego=VehicleSpec(state=VehicleState(0.0, ROAD.center(0), 0.0, 10.0)),
        duration=0.5,
    )
    result = run_episode(EpisodeConfig(scenario="empty", policy=Policy.PROPOSED), scenario=scenario)
    metrics = result.metrics
    assert metrics.steps == 5
    assert metrics.min_distance == FAR_DISTANCE
    assert not metrics.collision
    assert metrics.decisions == 1
    assert metrics.lane_changes == 0
    assert len(result.plan_log) == 5
    assert all(row["min_distance"] == math.inf for row in result.plan_log)
    assert len(result.trace) == 6
    assert any(record["chosen"] for record in result.decisions)


def test_replan_period_shorter_than_step():
    with pytest.raises(InputError):
        run_episode(EpisodeConfig(scenario="case1", duration=1.0, replan_period=0.05))


def test_run_batch_writes_episode_directories(tmp_path):
    """Each episode lands in <out>/<policy>/ep_<index> next to a batch index."""
    def fake_episode(cfg, scenario=None):
        return EpisodeResult(config=cfg, metrics=_metrics(cfg.policy, seed=cfg.seed))

    seen = []
    with patch("cooplane.harness.run_episode", side_effect=fake_episode):
        metrics = run_batch(2, [Policy.PROPOSED, Policy.IDM_MOBIL], seed_base=7, out_dir=tmp_path,
                            on_episode=seen.append)

    assert [(m.policy, m.seed) for m in metrics] == [
        (Policy.PROPOSED, 7), (Policy.PROPOSED, 8), (Policy.IDM_MOBIL, 7), (Policy.IDM_MOBIL, 8),
    ]
    assert len(seen) == 4
    assert (tmp_path / "PROPOSED" / "ep_000" / "metrics.json").exists()
    assert (tmp_path / "IDM_MOBIL" / "ep_001" / "trace.csv").exists()
    index = json.loads((tmp_path / "batch.json").read_text())
    assert index[1] == {"episode": 1, "policy": "PROPOSED", "seed": 8, "density": DENSITIES[1],
                        "path": "PROPOSED/ep_001"}


def test_equal_seeds_give_identical_batches():
    """Two batches with the same seeds produce the same metrics and summary."""
    base = EpisodeConfig(scenario="random3lane", duration=2.0)
    first = run_batch(2, [Policy.IDM_MOBIL], seed_base=3, base=base)
    second = run_batch(2, [Policy.IDM_MOBIL], seed_base=3, base=base)
    assert first == second
    assert [s.model_dump() for s in summarize(first)] == [s.model_dump() for s in summarize(second)]


def test_planned_episode_trace_is_deterministic():
    cfg = EpisodeConfig(scenario="case1", policy=Policy.PROPOSED_WO_IP, duration=0.3)
    first = run_episode(cfg)
    second = run_episode(cfg)
    assert first.trace == second.trace
    assert first.decisions == second.decisions


@pytest.mark.slow
def test_case1_proposed_merges_safely():
    """Interactive prediction finds the gap next to the obstacle well within 15 s."""
    metrics = run_episode(EpisodeConfig(scenario="case1", policy=Policy.PROPOSED)).metrics
    assert not metrics.collision
    assert metrics.min_distance > 0.0
    assert metrics.lane_changes >= 1
    assert metrics.lane_change_times[0] <= 15.0


@pytest.mark.slow
@pytest.mark.parametrize("policy", [Policy.PROPOSED_WO_IP, Policy.IDM_MOBIL])
def test_case1_without_interaction_stops_behind_obstacle(policy):
    """Without anticipating a yielding follower the ego stays in its lane and slows almost to a stop."""
    metrics = run_episode(EpisodeConfig(scenario="case1", policy=policy)).metrics
    assert not metrics.collision
    assert metrics.lane_changes == 0
    assert metrics.final_lane == 0
    assert metrics.final_speed < 2.0


@pytest.mark.slow
def test_case2_proposed_is_fastest():
    results = {policy: run_episode(EpisodeConfig(scenario="case2", policy=policy)).metrics for policy in Policy}
    proposed = results[Policy.PROPOSED]
    assert proposed.lane_changes >= 1
    assert not proposed.collision
    assert proposed.ego_mean_speed > results[Policy.PROPOSED_WO_IP].ego_mean_speed
    assert proposed.ego_mean_speed > results[Policy.IDM_MOBIL].ego_mean_speed


@pytest.mark.slow
def test_hundred_episode_batch_ordering():
    """Over paired seeds PROPOSED is fastest, never collides and lets the others drive at least as fast."""
    metrics = run_batch(100, list(Policy), seed_base=0, workers=4)
    summaries = {s.policy: s for s in summarize(metrics)}
    proposed = summaries[Policy.PROPOSED]
    without = summaries[Policy.PROPOSED_WO_IP]
    baseline = summaries[Policy.IDM_MOBIL]
    assert proposed.collisions == 0
    assert proposed.ego_mean_speed > without.ego_mean_speed > baseline.ego_mean_speed
    assert baseline.improvement_pct >= 5.0
    assert proposed.others_mean_speed >= baseline.others_mean_speed


def test_builtin_scenarios_are_valid():
    scenarios = builtin_scenarios(seed=1, density=10.0)
    assert set(scenarios) == {"case1", "case2", "random3lane"}
    assert scenarios["case1"].road.lane_count == 2
    assert sum(spec.stationary for spec in scenarios["case1"].others) == 1
    assert scenarios["case2"].road.lane_count == 3
    assert scenarios["random3lane"].name == "random3lane-1-10"
