from pathlib import Path
from typing import Optional

import rich_click as click

from ..config import episode_config_from, load_config
from ..error_handler import handle_command_errors
from ..errors import InputError
from ..evaluate import export_breakdowns, select_decision
from ..harness import resolve_scenario
from ..predict import PredictorKind, get_predictor
from ..records import write_prediction_csv
from ..refgen import build_decision_set
from ..traffic import DriverParams, WorldState
from ..ui.display import console, cost_table, print_formatted_result


@click.command()
@click.option("--scenario", default="case1", show_default=True, help="Built-in scenario name or scenario JSON file")
@click.option("--predictor", "predictor_kind", type=click.Choice([k.value for k in PredictorKind]),
              default=PredictorKind.INTERACTIVE.value, show_default=True, help="How surrounding traffic is predicted")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Seed for driver parameters")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
              help="Write costs, candidate references and predictions here")
@click.option("--format", "-f", "format_type", default="rich", type=click.Choice(["rich", "plain", "json"]),
              help="Output format")
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="Configuration file")
@handle_command_errors
def decide(scenario: str, predictor_kind: str, seed: int, out_dir: Optional[Path], format_type: str,
           config_path: Optional[Path]):
    """[bold]Evaluate every decision candidate[/bold] at t = 0.

    Prints the safety, efficiency, comfort and total cost of each candidate. With --out,
    each candidate's reference and predicted traffic are written as CSV for comparing
    interactive against constant-velocity prediction.

    Examples:\n
    [green]cooplane decide --scenario case1[/green]\n
    [green]cooplane decide --scenario case1 --predictor constant_velocity --out runs/decide_cv[/green]\n
    """
    app = load_config(config_path)
    cfg = episode_config_from(app, scenario=scenario, seed=seed)
    resolved = resolve_scenario(cfg)
    world = WorldState.from_scenario(
        resolved,
        ego_params=DriverParams.nominal(v0=cfg.weights.v_des),
        seed=seed,
        history_seconds=cfg.history_seconds,
        ranges=cfg.driver,
    )
    refgen = cfg.refgen.model_copy(update={"dt": resolved.dt})
    candidates = build_decision_set(world.ego.state, world.road, cfg.limits, refgen, start_step=0)
    if not candidates:
        raise InputError(f"No feasible decision candidate for the initial state of {resolved.name}")

    kind = PredictorKind(predictor_kind)
    predictor = get_predictor(kind, cfg.predictor)
    decision = select_decision(candidates, world, predictor, cfg.weights)

    rows = [b.to_dict() for b in decision.breakdowns]
    title = f"{resolved.name}: {kind.value} prediction"
    print_formatted_result(rows, format_type, table=cost_table(rows, decision.candidate.index, title=title), title=title)
    if format_type == "rich":
        console.print(f"[bold green]Chosen:[/bold green] {decision.candidate.label}")

    if out_dir is not None:
        export_breakdowns(decision.breakdowns, out_dir / "costs.json")
        for candidate in candidates:
            write_prediction_csv(out_dir / f"candidate_{candidate.index:02d}.csv", candidate.reference,
                                 decision.predictions[candidate.index])
        console.print(f"[green]Costs and predictions saved to {out_dir}[/green]")