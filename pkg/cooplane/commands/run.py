import sys
from pathlib import Path
from typing import Optional

import rich_click as click

from ..config import episode_config_from, load_config
from ..error_handler import handle_command_errors
from ..harness import Policy, run_episode
from ..records import create_run_dir, write_episode
from ..ui.display import console, metrics_table
from ..ui.progress import create_simple_progress
from ..utils import apply_overrides, parse_overrides


@click.command(context_settings={"allow_extra_args": True, "allow_interspersed_args": False})
@click.option("--scenario", default="case1", show_default=True,
              help="Built-in scenario ([bold]case1[/bold], [bold]case2[/bold], [bold]random3lane[/bold]) or a scenario JSON file")
@click.option("--policy", type=click.Choice([p.value for p in Policy]), default=Policy.PROPOSED.value, show_default=True,
              help="Ego driving policy")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Seed for driver parameters and random traffic")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), help="Directory for the episode records")
@click.option("--density", type=click.FloatRange(min=0.0, min_open=True), help="Vehicles per lane-km (random3lane only)")
@click.option("--duration", type=click.FloatRange(min=0.0, min_open=True), help="Episode length in seconds")
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="Configuration file")
@click.pass_context
@handle_command_errors
def run(
    ctx,
    scenario: str,
    policy: str,
    seed: int,
    out_dir: Optional[Path],
    density: Optional[float],
    duration: Optional[float],
    config_path: Optional[Path],
):
    """[bold]Run one closed-loop episode[/bold].

    Additional settings can be passed as dotted key=value pairs:

    Examples:\n
    [green]cooplane run --scenario case1 --out runs/case1[/green]\n
    [green]cooplane run --scenario case2 --policy IDM_MOBIL --out runs/case2[/green]\n
    [green]cooplane run --scenario random3lane --density 20 --seed 7 weights.v_des=22[/green]\n
    """
    overrides = parse_overrides(ctx.args)
    if overrides:
        console.print(f"[blue]Using overrides: {overrides}[/blue]")
    app = apply_overrides(load_config(config_path), overrides)
    cfg = episode_config_from(app, scenario=scenario, policy=Policy(policy), seed=seed,
                              density=density, duration=duration)

    progress = create_simple_progress()
    with progress:
        progress.add_task(f"Running {scenario} with {policy}...", total=None)
        result = run_episode(cfg)

    console.print(metrics_table(result.metrics.model_dump(mode="json"), title=f"{result.metrics.scenario} / {policy}"))

    if out_dir is not None:
        run_dir = create_run_dir(out_dir.parent, out_dir.name)
        write_episode(result, run_dir)
        console.print(f"[green]Episode records saved to {run_dir}[/green]")

    if result.metrics.collision and cfg.policy == Policy.PROPOSED:
        console.print("[bold red]The ego collided.[/bold red]")
        sys.exit(2)
