import sys
from pathlib import Path
from typing import Optional

import rich_click as click

from ..config import episode_config_from, load_config
from ..error_handler import handle_command_errors
from ..errors import InputError
from ..harness import Policy, proposed_collided, run_batch, summarize
from ..records import write_summary
from ..ui.display import console, summary_table
from ..ui.progress import create_batch_progress
from ..utils import apply_overrides, parse_overrides


def parse_policies(raw: str):
    policies = []
    for name in raw.split(","):
        name = name.strip().upper()
        if not name:
            continue
        try:
            policies.append(Policy(name))
        except ValueError:
            raise InputError(f"Unknown policy '{name}'. Choose from {', '.join(p.value for p in Policy)}")
    if not policies:
        raise InputError("No policy given")
    return policies


@click.command(context_settings={"allow_extra_args": True, "allow_interspersed_args": False})
@click.option("--episodes", type=click.IntRange(min=1), default=100, show_default=True, help="Episodes per policy")
@click.option("--policies", default="PROPOSED,PROPOSED_WO_IP,IDM_MOBIL", show_default=True,
              help="Comma-separated policies; every policy sees the same seeds and densities")
@click.option("--seed-base", type=click.IntRange(min=0), default=0, show_default=True, help="Seed of episode 0")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory for the batch records")
@click.option("--workers", type=click.IntRange(min=1), help="Parallel worker processes (config harness.workers by default)")
@click.option("--duration", type=click.FloatRange(min=0.0, min_open=True), default=30.0, show_default=True,
              help="Episode length in seconds")
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="Configuration file")
@click.pass_context
@handle_command_errors
def batch(
    ctx,
    episodes: int,
    policies: str,
    seed_base: int,
    out_dir: Path,
    workers: Optional[int],
    duration: float,
    config_path: Optional[Path],
):
    """[bold]Run paired random three-lane episodes[/bold] for each policy.

    Episode i uses seed seed-base + i and cycles the traffic density through 10, 15 and 20
    vehicles per lane-km.

    Examples:\n
    [green]cooplane batch --episodes 100 --out runs/batch[/green]\n
    [green]cooplane batch --episodes 10 --policies PROPOSED,IDM_MOBIL --workers 4 --out runs/small[/green]\n
    """
    selected = parse_policies(policies)
    app = apply_overrides(load_config(config_path), parse_overrides(ctx.args))
    base = episode_config_from(app, scenario="random3lane", duration=duration)
    workers = workers or app.harness.workers

    progress = create_batch_progress()
    with progress:
        task = progress.add_task("Running episodes...", total=episodes * len(selected))

        def advance(metrics):
            progress.update(task, advance=1, description=f"{metrics.policy.value} seed {metrics.seed}")

        metrics = run_batch(episodes, selected, seed_base=seed_base, base=base, out_dir=out_dir,
                            workers=workers, on_episode=advance)

    summaries = summarize(metrics)
    write_summary(summaries, out_dir)
    console.print(summary_table([s.model_dump(mode="json") for s in summaries]))
    console.print(f"[green]Batch records saved to {out_dir}[/green]")

    if proposed_collided(metrics):
        console.print("[bold red]At least one PROPOSED episode collided.[/bold red]")
        sys.exit(2)
