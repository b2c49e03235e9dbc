"""
Tests for run-output persistence.
"""
import csv
import json

import numpy as np
import pytest

from cooplane.core import Trajectory, read_trace_csv
from cooplane.errors import OutputError
from cooplane.harness import EpisodeConfig, EpisodeMetrics, EpisodeResult, Policy, summarize
from cooplane.predict import PredictionResult, PredictorKind
from cooplane.records import (
    DECISION_COLUMNS,
    PREDICTION_COLUMNS,
    create_run_dir,
    iter_episodes,
    load_episode,
    write_decisions_csv,
    write_episode,
    write_prediction_csv,
    write_summary,
)


def _result(policy=Policy.PROPOSED, seed=0, ego_speed=15.0):
    cfg = EpisodeConfig(scenario="case1", policy=policy, seed=seed, duration=0.2)
    metrics = EpisodeMetrics(
        scenario="case1",
        policy=policy,
        seed=seed,
        steps=2,
        ego_mean_speed=ego_speed,
        others_mean_speed=5.0,
        final_speed=ego_speed,
        min_distance=2.5,
        collision=False,
        lane_changes=1,
        lane_change_times=[0.2],
        final_lane=1,
        solver_failures=0,
        decisions=1,
    )
    trace = [(step, vid, float(step), 0.0, 0.0, 10.0, 0.0, 0.0) for step in range(3) for vid in range(2)]
    decisions = [
        {"step": 0, "time": 0.0, "index": i, "label": label, "J_s_lon": 0.0, "J_s_lat": 0.0, "J_s": 0.0,
         "J_e": 1.0, "J_c": float(i), "J_d": 1.0 + i, "chosen": i == 0}
        for i, label in enumerate(["KEEP/KEEP_SPEED", "LEFT/KEEP_SPEED"])
    ]
    return EpisodeResult(config=cfg, metrics=metrics, trace=trace, decisions=decisions)


def test_create_run_dir(tmp_path):
    named = create_run_dir(tmp_path, "case1")
    assert named == tmp_path / "case1" and named.is_dir()
    stamped = create_run_dir(tmp_path / "runs")
    assert stamped.name.startswith("run_")


def test_write_and_load_episode(tmp_path):
    """An episode directory holds every record and reads back into the same metrics."""
    result = _result()
    directory = write_episode(result, tmp_path / "ep")
    for name in ("metrics.json", "trace.csv", "decisions.json", "plan_log.csv", "config.json"):
        assert (directory / name).exists()
    record = load_episode(directory)
    assert record.metrics == result.metrics
    assert record.config == result.config
    assert record.decisions == result.decisions
    trace = read_trace_csv(directory / "trace.csv")
    assert len(trace) == 6
    assert trace[-1]["step"] == 2


def test_load_episode_without_metrics(tmp_path):
    with pytest.raises(OutputError):
        load_episode(tmp_path)


def test_load_episode_with_corrupt_metrics(tmp_path):
    (tmp_path / "metrics.json").write_text("{")
    with pytest.raises(OutputError, match="Unreadable"):
        load_episode(tmp_path)


def test_iter_episodes(tmp_path):
    write_episode(_result(Policy.PROPOSED), tmp_path / "PROPOSED" / "ep_000")
    write_episode(_result(Policy.IDM_MOBIL), tmp_path / "IDM_MOBIL" / "ep_000")
    records = list(iter_episodes(tmp_path))
    assert [r.metrics.policy for r in records] == [Policy.IDM_MOBIL, Policy.PROPOSED]
    assert len(list(iter_episodes(tmp_path / "PROPOSED" / "ep_000"))) == 1
    with pytest.raises(OutputError):
        list(iter_episodes(tmp_path / "missing"))


def test_write_summary(tmp_path):
    summaries = summarize([_result(Policy.PROPOSED, ego_speed=16.0).metrics,
                           _result(Policy.IDM_MOBIL, ego_speed=14.0).metrics])
    json_path, csv_path = write_summary(summaries, tmp_path)
    rows = json.loads(json_path.read_text())
    assert [row["policy"] for row in rows] == ["PROPOSED", "IDM_MOBIL"]
    with open(csv_path, newline="") as f:
        table = list(csv.DictReader(f))
    assert float(table[1]["improvement_pct"]) == pytest.approx(100.0 * 2.0 / 14.0)
    assert table[0]["improvement_pct"] == ""


def test_write_decisions_csv(tmp_path):
    write_episode(_result(), tmp_path / "PROPOSED" / "ep_003")
    records = list(iter_episodes(tmp_path))
    path = write_decisions_csv(records, tmp_path / "decisions.csv")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert tuple(rows[0].keys()) == ("policy", "seed", "episode") + DECISION_COLUMNS
    assert len(rows) == 2
    assert rows[0]["episode"] == "ep_003"
    assert rows[1]["label"] == "LEFT/KEEP_SPEED"


def test_write_prediction_csv(tmp_path):
    """The reference is written as vehicle 0 ahead of the predicted vehicles."""
    states = np.column_stack([np.arange(3.0), np.zeros(3), np.zeros(3), np.full(3, 10.0)])
    reference = Trajectory(4, 0.1, states)
    prediction = PredictionResult({2: Trajectory(4, 0.1, states + 5.0)}, {}, PredictorKind.CONSTANT_VELOCITY)
    path = write_prediction_csv(tmp_path / "pred" / "candidate_0.csv", reference, prediction)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert tuple(rows[0].keys()) == PREDICTION_COLUMNS
    assert len(rows) == 6
    assert (rows[0]["vehicle_id"], rows[0]["step"]) == ("0", "4")
    assert rows[3]["vehicle_id"] == "2"
    assert float(rows[3]["x"]) == 5.0
