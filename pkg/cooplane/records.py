"""
Run-output persistence: episode directories, batch indexes and report files.
"""
import csv
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from .core import write_trace_csv
from .errors import OutputError
from .harness import EpisodeConfig, EpisodeMetrics, EpisodeResult, PolicySummary
from .planner import write_plan_log

DECISION_COLUMNS = ("step", "time", "index", "label", "J_s_lon", "J_s_lat", "J_s", "J_e", "J_c", "J_d", "chosen")
PREDICTION_COLUMNS = ("vehicle_id", "step", "x", "y", "psi", "v")


@dataclass
class EpisodeRecord:
    path: Path
    metrics: EpisodeMetrics
    config: Optional[EpisodeConfig] = None
    decisions: List[dict] = field(default_factory=list)


def create_run_dir(root: Path, name: Optional[str] = None) -> Path:
    """Create a run directory under ``root``, timestamped when no name is given."""
    if not name:
        name = f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
    run_dir = Path(root) / name
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _write_json(path: Path, data) -> Path:
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
    return path


def write_episode(result: EpisodeResult, directory: Path) -> Path:
    """Write metrics, trace, decision costs, planner log and resolved config of one episode."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_json(directory / "metrics.json", result.metrics.model_dump(mode="json"))
    write_trace_csv(directory / "trace.csv", result.trace)
    _write_json(directory / "decisions.json", result.decisions)
    write_plan_log(directory / "plan_log.csv", result.plan_log)
    _write_json(directory / "config.json", result.config.model_dump(mode="json"))
    return directory


def write_batch_index(out_dir: Path, configs: Sequence[Tuple[int, EpisodeConfig]]) -> Path:
    entries = [
        {
            "episode": index,
            "policy": cfg.policy.value,
            "seed": cfg.seed,
            "density": cfg.density,
            "path": f"{cfg.policy.value}/ep_{index:03d}",
        }
        for index, cfg in configs
    ]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return _write_json(out_dir / "batch.json", entries)


def load_episode(directory: Path) -> EpisodeRecord:
    """
    Read an episode directory written by ``write_episode``.

    Raises:
        OutputError: If metrics.json is missing or any file is unreadable.
    """
    directory = Path(directory)
    metrics_path = directory / "metrics.json"
    if not metrics_path.exists():
        raise OutputError(f"No metrics.json in {directory}")
    try:
        with open(metrics_path, "r") as f:
            metrics = EpisodeMetrics.model_validate(json.load(f))
        config = None
        if (directory / "config.json").exists():
            with open(directory / "config.json", "r") as f:
                config = EpisodeConfig.model_validate(json.load(f))
        decisions = []
        if (directory / "decisions.json").exists():
            with open(directory / "decisions.json", "r") as f:
                decisions = json.load(f)
    except (json.JSONDecodeError, ValidationError) as e:
        raise OutputError(f"Unreadable episode records in {directory}: {e}")
    return EpisodeRecord(path=directory, metrics=metrics, config=config, decisions=decisions)


def iter_episodes(root: Path) -> Iterator[EpisodeRecord]:
    """Every episode below ``root``, including ``root`` itself, in path order."""
    root = Path(root)
    if not root.is_dir():
        raise OutputError(f"Not a directory: {root}")
    for metrics_path in sorted(root.rglob("metrics.json")):
        yield load_episode(metrics_path.parent)


def write_summary(summaries: Sequence[PolicySummary], out_dir: Path) -> Tuple[Path, Path]:
    """Write summary.json and summary.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [s.model_dump(mode="json") for s in summaries]
    json_path = _write_json(out_dir / "summary.json", rows)
    csv_path = out_dir / "summary.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(PolicySummary.model_fields))
        writer.writeheader()
        writer.writerows(rows)
    return json_path, csv_path


def write_decisions_csv(records: Sequence[EpisodeRecord], path: Path) -> Path:
    """Flatten the decision costs of every episode into one CSV."""
    path = Path(path)
    fieldnames = ("policy", "seed", "episode") + DECISION_COLUMNS
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for record in records:
            for decision in record.decisions:
                writer.writerow({
                    "policy": record.metrics.policy.value,
                    "seed": record.metrics.seed,
                    "episode": record.path.name,
                    **decision,
                })
    return path


def write_prediction_csv(path: Path, reference, prediction) -> Path:
    """
    Write a candidate reference (vehicle id 0) and the predicted trajectories of the
    surrounding vehicles into one CSV.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trajectories = [(0, reference)] + sorted(prediction.trajectories.items())
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PREDICTION_COLUMNS)
        for vehicle_id, traj in trajectories:
            for i, row in enumerate(traj.states):
                writer.writerow([vehicle_id, traj.start_step + i] + [repr(float(value)) for value in row])
    return path
