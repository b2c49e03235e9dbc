from pathlib import Path
from typing import Optional

import rich_click as click
from rich.table import Table

from ..core import save_scenario
from ..error_handler import handle_command_errors
from ..scenarios import builtin_scenarios
from ..ui.display import console


@click.command("scenarios")
@click.option("--export", "export_dir", type=click.Path(file_okay=False, path_type=Path),
              help="Write every built-in scenario as JSON into this directory")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Seed for random3lane")
@click.option("--density", type=click.FloatRange(min=0.0, min_open=True), default=15.0, show_default=True,
              help="Density for random3lane, vehicles per lane-km")
@handle_command_errors
def list_scenarios_command(export_dir: Optional[Path], seed: int, density: float):
    """List the built-in scenarios."""
    scenarios = builtin_scenarios(seed, density)

    table = Table(title="Built-in scenarios", header_style="bold blue")
    table.add_column("Name", style="bold")
    table.add_column("Lanes", justify="right")
    table.add_column("Vehicles", justify="right")
    table.add_column("Stationary", justify="right")
    table.add_column("Duration [s]", justify="right")
    table.add_column("Ego speed [m/s]", justify="right")
    for key, scenario in scenarios.items():
        table.add_row(
            key,
            str(scenario.road.lane_count),
            str(len(scenario.others)),
            str(sum(1 for spec in scenario.others if spec.stationary)),
            f"{scenario.duration:g}",
            f"{scenario.ego.state.v:g}",
        )
    console.print(table)

    if export_dir is not None:
        for key, scenario in scenarios.items():
            path = save_scenario(scenario, export_dir / f"{key}.json")
            console.print(f"[green]Exported {key} to {path}[/green]")
