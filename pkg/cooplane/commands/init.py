import rich_click as click

from ..config import config_dir, ensure_config_exists
from ..error_handler import handle_command_errors
from ..ui.display import console


@click.command()
@click.option("--force", "-f",
              is_flag=True,
              help="Force overwrite existing configuration")
@handle_command_errors
def init(force: bool):
    """[bold]Initialize Cooplane configuration[/bold].

    Creates ~/.cooplane with a config.json holding every default setting and a .env file
    for values referenced as ${VAR} from the config.

    Examples:\n
    [green]cooplane init[/green]\n
    [green]cooplane init --force[/green] - Overwrite an existing configuration\n
    """
    directory = config_dir()
    config_file = directory / "config.json"

    if not ensure_config_exists(force=force):
        console.print(f"[yellow]Cooplane is already initialized at {directory}[/yellow]")
        console.print("[green]Use --force to overwrite existing configuration[/green]")
        console.print(f"[blue]Current config: {config_file}[/blue]")
        return

    console.print(f"\n[bold blue]Setup Complete![/bold blue]")
    console.print(f"\n[bold blue]Next Steps:[/bold blue]")
    console.print(f"1. Customize weights and solver settings (optional): [cyan]{config_file}[/cyan]")
    console.print("2. Run a scenario: [green]cooplane run --scenario case1 --out runs/case1[/green]")
    console.print("3. Compare policies: [green]cooplane batch --episodes 10 --out runs/batch[/green]")
