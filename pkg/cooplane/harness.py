"""
Episode orchestration: the decide, predict, evaluate and plan loop, the baselines and
batch evaluation with paired seeds.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import traffic
from .core import ControlInput, DriverParamRanges, MotionLimits, Scenario, load_scenario
from .errors import InputError, ScenarioError
from .evaluate import CostWeights, Decision, select_decision
from .occupancy import occupancy_polytope, rect_distance
from .planner import MpcConfig, PlanStepResult, plan_step
from .predict import PredictorConfig, PredictorKind, get_predictor
from .refgen import RefgenParams, build_decision_set
from .scenarios import BUILTIN, builtin_scenarios, density_for_episode, random3lane
from .traffic import DriverParams, LaneDecision, WorldState

logger = logging.getLogger(__name__)

# reported when no vehicle ever came within reach of the ego
FAR_DISTANCE = 1000.0

__all__ = [
    "Policy", "EpisodeConfig", "EpisodeMetrics", "EpisodeResult", "PolicySummary",
    "builtin_scenarios", "resolve_scenario", "run_episode", "run_batch", "summarize",
]


class Policy(str, Enum):
    PROPOSED = "PROPOSED"
    PROPOSED_WO_IP = "PROPOSED_WO_IP"
    IDM_MOBIL = "IDM_MOBIL"

    @property
    def predictor(self) -> Optional[PredictorKind]:
        return {
            "PROPOSED": PredictorKind.INTERACTIVE,
            "PROPOSED_WO_IP": PredictorKind.CONSTANT_VELOCITY,
            "IDM_MOBIL": None,
        }[self.value]


class EpisodeConfig(BaseModel):
    """Everything that determines one episode."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: str = "case1"
    policy: Policy = Policy.PROPOSED
    seed: int = Field(0, ge=0)
    density: Optional[float] = Field(None, gt=0.0)
    duration: Optional[float] = Field(None, gt=0.0)
    recycle: Optional[bool] = None
    replan_period: float = Field(1.0, gt=0.0)
    abort_factor: float = Field(2.0, ge=0.0)
    history_seconds: float = Field(2.0, ge=0.0)
    weights: CostWeights = CostWeights()
    mpc: MpcConfig = MpcConfig()
    refgen: RefgenParams = RefgenParams()
    predictor: PredictorConfig = PredictorConfig()
    limits: MotionLimits = MotionLimits()
    driver: DriverParamRanges = DriverParamRanges()


class EpisodeMetrics(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: str
    policy: Policy
    seed: int
    density: Optional[float] = None
    steps: int
    ego_mean_speed: float
    others_mean_speed: float
    final_speed: float
    min_distance: float
    collision: bool
    lane_changes: int
    lane_change_times: List[float] = Field(default_factory=list)
    final_lane: int
    solver_failures: int
    decisions: int


@dataclass
class EpisodeResult:
    config: EpisodeConfig
    metrics: EpisodeMetrics
    trace: List[Tuple] = field(default_factory=list)
    decisions: List[dict] = field(default_factory=list)
    plan_log: List[dict] = field(default_factory=list)


def resolve_scenario(cfg: EpisodeConfig) -> Scenario:
    """Instantiate a built-in scenario by name or load a scenario file."""
    if cfg.scenario in BUILTIN:
        if cfg.scenario == "random3lane":
            scenario = random3lane(cfg.seed, cfg.density or 15.0, recycle=bool(cfg.recycle))
        else:
            scenario = BUILTIN[cfg.scenario](cfg.seed)
    else:
        path = Path(cfg.scenario)
        if not path.exists():
            raise ScenarioError(f"Unknown scenario '{cfg.scenario}'. Use one of {', '.join(BUILTIN)} or a JSON file.")
        scenario = load_scenario(path)
    updates = {}
    if cfg.duration is not None:
        updates["duration"] = cfg.duration
    if cfg.recycle is not None:
        updates["recycle"] = cfg.recycle
    return scenario.model_copy(update=updates) if updates else scenario


def min_oracle_distance(world: WorldState, reach: float = 30.0) -> float:
    """Smallest footprint distance between the ego and any other vehicle."""
    ego = world.ego
    ego_poly = occupancy_polytope(ego.state, ego.geometry)
    best = math.inf
    for other in world.others:
        if abs(other.state.x - ego.state.x) > reach:
            continue
        best = min(best, rect_distance(ego_poly, occupancy_polytope(other.state, other.geometry)))
    return best


class _Episode:
    """Mutable loop state of one episode."""

    def __init__(self, cfg: EpisodeConfig, scenario: Scenario):
        if cfg.replan_period < scenario.dt - 1e-12:
            raise InputError(f"Replan period {cfg.replan_period}s is shorter than dt {scenario.dt}s")
        self.cfg = cfg
        self.scenario = scenario
        self.dt = scenario.dt
        ego_params = DriverParams.nominal(v0=cfg.weights.v_des)
        self.world = WorldState.from_scenario(scenario, ego_params=ego_params, seed=cfg.seed,
                                              history_seconds=cfg.history_seconds, ranges=cfg.driver)
        self.mpc = cfg.mpc if abs(cfg.mpc.dt - self.dt) < 1e-12 else cfg.mpc.model_copy(update={"dt": self.dt})
        self.refgen = cfg.refgen if abs(cfg.refgen.dt - self.dt) < 1e-12 else cfg.refgen.model_copy(update={"dt": self.dt})
        kind = cfg.policy.predictor
        self.predictor = get_predictor(kind, cfg.predictor) if kind is not None else None
        self.replan_steps = max(int(round(cfg.replan_period / self.dt)), 1)

        self.committed: Optional[Decision] = None
        self.commit_step = 0
        self.abort = False
        self.prev_u = ControlInput()
        self.previous_plan: Optional[PlanStepResult] = None

        self.trace: List[Tuple] = []
        self.decision_records: List[dict] = []
        self.plan_log: List[dict] = []
        self.ego_speeds: List[float] = []
        self.others_speeds: List[float] = []
        self.min_distance = math.inf
        self.lane_changes = 0
        self.lane_change_times: List[float] = []
        self.solver_failures = 0
        self.lane = scenario.road.lane_of(scenario.ego.state.y)

    # decision layer ---------------------------------------------------

    def _needs_decision(self, step: int) -> bool:
        if self.committed is None or self.abort:
            return True
        elapsed = (step - self.commit_step) * self.dt
        candidate = self.committed.candidate
        if candidate.is_lane_change:
            return elapsed >= candidate.maneuver_duration - 1e-9
        return step - self.commit_step >= self.replan_steps

    def _decide(self, step: int) -> None:
        ego = self.world.ego
        candidates = build_decision_set(ego.state, self.world.road, self.cfg.limits, self.refgen, start_step=step)
        if not candidates:
            logger.warning("No feasible candidate at step %d, keeping the committed reference", step)
            return
        decision = select_decision(candidates, self.world, self.predictor, self.cfg.weights)
        if self.abort:
            logger.warning("Re-deciding at step %d after a lane-change abort", step)
        self.committed, self.commit_step, self.abort = decision, step, False
        chosen = decision.candidate.index
        for breakdown in decision.breakdowns:
            record = breakdown.to_dict()
            record.update(step=step, time=step * self.dt, chosen=breakdown.index == chosen)
            self.decision_records.append(record)
        logger.info("t=%.1fs committed %s", step * self.dt, decision.candidate.label)

    def _plan(self, step: int):
        ego = self.world.ego
        decision = self.committed
        result = plan_step(
            step, decision.candidate.reference, decision.prediction, ego.state, self.prev_u,
            self.cfg.limits, self.mpc, self.world.road, ego.geometry, previous=self.previous_plan,
        )
        self.previous_plan = result if result.accepted else None
        self.solver_failures += int(result.fallback)
        self.prev_u = result.control
        return result

    # ego under the rule-based baseline --------------------------------

    def _idm_mobil_ego(self) -> float:
        world = self.world
        ego = world.ego
        if ego.lane_change is None and ego.cooldown <= 0.0:
            decision = traffic.mobil_decide(ego.vehicle_id, world)
            if decision != LaneDecision.STAY:
                traffic.start_lane_change(world, ego, decision)
                logger.info("IDM/MOBIL ego starts a %s lane change", decision.value)
        return traffic.vehicle_accel(world, ego)

    # main loop --------------------------------------------------------

    def _record(self, step: int, ego_control: ControlInput) -> None:
        for vehicle in self.world.vehicles:
            s = vehicle.state
            if vehicle.is_ego:
                a, delta = ego_control.a, ego_control.delta
            else:
                a, delta = vehicle.accel, 0.0
            self.trace.append((step, vehicle.vehicle_id, s.x, s.y, s.psi, s.v, a, delta))

    def run(self) -> EpisodeResult:
        world = self.world
        self._record(0, ControlInput())
        self.min_distance = min_oracle_distance(world)
        steps = self.scenario.steps
        for step in range(steps):
            ego = world.ego
            if self.cfg.policy == Policy.IDM_MOBIL:
                accel = self._idm_mobil_ego()
                control = ControlInput(a=accel, delta=0.0)
                traffic.step(world, record=False)
                traffic.advance_vehicle(world, ego, accel, self.dt)
            else:
                if self._needs_decision(step):
                    self._decide(step)
                result = self._plan(step)
                control = result.control
                traffic.step(world, record=False)
                ego.state = result.next_state
                row = result.log_row()
                self.plan_log.append(row)
            world.record_history()

            distance = min_oracle_distance(world)
            self.min_distance = min(self.min_distance, distance)
            if distance <= 0.0:
                logger.warning("Collision at t=%.1fs", (step + 1) * self.dt)
            if self.plan_log and self.cfg.policy != Policy.IDM_MOBIL:
                self.plan_log[-1]["min_distance"] = distance
            committed = self.committed
            if (committed is not None and committed.candidate.is_lane_change
                    and distance < self.cfg.abort_factor * self.mpc.d_min and not self.abort):
                logger.warning("Oracle distance %.2f m during a lane change, aborting", distance)
                self.abort = True

            lane = world.road.lane_of(ego.state.y)
            if lane != self.lane:
                self.lane_changes += 1
                self.lane_change_times.append((step + 1) * self.dt)
                logger.info("Ego entered lane %d at t=%.1fs", lane, (step + 1) * self.dt)
                self.lane = lane
            self.ego_speeds.append(ego.state.v)
            self.others_speeds.extend(v.state.v for v in world.others if not v.stationary)
            self._record(step + 1, control)
        return self._result()

    def _result(self) -> EpisodeResult:
        ego = self.world.ego
        metrics = EpisodeMetrics(
            scenario=self.scenario.name,
            policy=self.cfg.policy,
            seed=self.cfg.seed,
            density=self.cfg.density,
            steps=len(self.ego_speeds),
            ego_mean_speed=float(np.mean(self.ego_speeds)) if self.ego_speeds else ego.state.v,
            others_mean_speed=float(np.mean(self.others_speeds)) if self.others_speeds else 0.0,
            final_speed=ego.state.v,
            min_distance=min(self.min_distance, FAR_DISTANCE),
            collision=self.min_distance <= 0.0,
            lane_changes=self.lane_changes,
            lane_change_times=self.lane_change_times,
            final_lane=self.lane,
            solver_failures=self.solver_failures,
            decisions=len({record["step"] for record in self.decision_records}),
        )
        return EpisodeResult(
            config=self.cfg,
            metrics=metrics,
            trace=self.trace,
            decisions=self.decision_records,
            plan_log=self.plan_log,
        )


def run_episode(cfg: EpisodeConfig, scenario: Optional[Scenario] = None) -> EpisodeResult:
    """
    Run one closed-loop episode.

    Raises:
        ScenarioError: If the scenario cannot be resolved or its initial state is invalid.
        InputError: If the replan period is shorter than the simulation step.
    """
    scenario = scenario or resolve_scenario(cfg)
    logger.info("Running %s with %s (seed %d, %d steps)", scenario.name, cfg.policy.value, cfg.seed, scenario.steps)
    return _Episode(cfg, scenario).run()


# batches ------------------------------------------------------------------

def batch_configs(
    n_episodes: int,
    policies: Sequence[Policy],
    seed_base: int,
    base: Optional[EpisodeConfig] = None,
    densities: Optional[Sequence[float]] = None,
) -> List[Tuple[int, EpisodeConfig]]:
    """Paired configurations: episode ``i`` uses the same seed and density for every policy."""
    if n_episodes < 1:
        raise InputError(f"A batch needs at least one episode, got {n_episodes}")
    base = base or EpisodeConfig(scenario="random3lane", duration=30.0)
    configs = []
    for policy in policies:
        for i in range(n_episodes):
            density = densities[i % len(densities)] if densities else density_for_episode(i)
            configs.append((i, base.model_copy(update={
                "scenario": "random3lane",
                "policy": Policy(policy),
                "seed": seed_base + i,
                "density": density,
                "recycle": True,
            })))
    return configs


def _run_task(index: int, cfg: EpisodeConfig, out_dir: Optional[str]) -> Tuple[int, dict]:
    from .records import write_episode

    result = run_episode(cfg)
    if out_dir is not None:
        write_episode(result, Path(out_dir) / cfg.policy.value / f"ep_{index:03d}")
    return index, result.metrics.model_dump(mode="json")


def run_batch(
    n_episodes: int,
    policies: Sequence[Policy],
    seed_base: int = 0,
    base: Optional[EpisodeConfig] = None,
    out_dir: Optional[Path] = None,
    workers: int = 1,
    on_episode: Optional[Callable[[EpisodeMetrics], None]] = None,
) -> List[EpisodeMetrics]:
    """
    Run ``n_episodes`` random three-lane episodes for each policy.

    Episodes are independent and run in a process pool when ``workers > 1``; the
    returned list is ordered by policy and episode index either way.
    """
    configs = batch_configs(n_episodes, policies, seed_base, base)
    out = str(out_dir) if out_dir is not None else None
    results: Dict[Tuple[str, int], EpisodeMetrics] = {}

    def collect(index: int, cfg: EpisodeConfig, metrics: dict) -> None:
        parsed = EpisodeMetrics.model_validate(metrics)
        results[(cfg.policy.value, index)] = parsed
        if on_episode is not None:
            on_episode(parsed)

    if workers <= 1:
        for index, cfg in configs:
            collect(index, cfg, _run_task(index, cfg, out)[1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(pool.submit(_run_task, index, cfg, out), cfg) for index, cfg in configs]
            for future, cfg in futures:
                index, metrics = future.result()
                collect(index, cfg, metrics)
    ordered = [results[(cfg.policy.value, index)] for index, cfg in configs]
    if out_dir is not None:
        from .records import write_batch_index

        write_batch_index(Path(out_dir), configs)
    return ordered


class PolicySummary(BaseModel):
    policy: Policy
    episodes: int
    ego_mean_speed: float
    others_mean_speed: float
    min_distance: float
    collisions: int
    lane_changes: float
    solver_failures: int
    improvement_pct: Optional[float] = None


def summarize(metrics: Sequence[EpisodeMetrics]) -> List[PolicySummary]:
    """
    Per-policy means, plus the relative ego-speed improvement of PROPOSED over each other
    policy (in percent, on the baseline row).
    """
    grouped: Dict[Policy, List[EpisodeMetrics]] = {}
    for m in metrics:
        grouped.setdefault(Policy(m.policy), []).append(m)
    summaries = {}
    for policy in Policy:
        rows = grouped.get(policy)
        if not rows:
            continue
        summaries[policy] = PolicySummary(
            policy=policy,
            episodes=len(rows),
            ego_mean_speed=float(np.mean([m.ego_mean_speed for m in rows])),
            others_mean_speed=float(np.mean([m.others_mean_speed for m in rows])),
            min_distance=float(min(m.min_distance for m in rows)),
            collisions=sum(1 for m in rows if m.collision),
            lane_changes=float(np.mean([m.lane_changes for m in rows])),
            solver_failures=sum(m.solver_failures for m in rows),
        )
    proposed = summaries.get(Policy.PROPOSED)
    if proposed is not None:
        for policy, summary in summaries.items():
            if policy != Policy.PROPOSED and summary.ego_mean_speed > 0.0:
                gain = 100.0 * (proposed.ego_mean_speed - summary.ego_mean_speed) / summary.ego_mean_speed
                summaries[policy] = summary.model_copy(update={"improvement_pct": gain})
    return list(summaries.values())


def proposed_collided(metrics: Sequence[EpisodeMetrics]) -> bool:
    return any(m.collision and Policy(m.policy) == Policy.PROPOSED for m in metrics)
