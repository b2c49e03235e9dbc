import sys
from pathlib import Path

import rich_click as click

from ..error_handler import handle_command_errors
from ..errors import OutputError
from ..harness import proposed_collided, summarize
from ..records import iter_episodes, write_decisions_csv, write_summary
from ..ui.display import console, print_formatted_result, summary_table


@click.command()
@click.option("--in", "in_dir", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory written by run or batch")
@click.option("--format", "-f", "format_type", default="rich", type=click.Choice(["rich", "plain", "json"]),
              help="Output format")
@handle_command_errors
def report(in_dir: Path, format_type: str = "rich"):
    """[bold]Summarize episode records[/bold] per policy.

    Writes summary.json, summary.csv and decisions.csv into the input directory.

    Examples:\n
    [green]cooplane report --in runs/batch[/green]\n
    [green]cooplane report --in runs/batch --format json[/green]\n
    """
    records = list(iter_episodes(in_dir))
    if not records:
        raise OutputError(f"No episode records found under {in_dir}")

    metrics = [record.metrics for record in records]
    summaries = summarize(metrics)
    write_summary(summaries, in_dir)
    write_decisions_csv(records, in_dir / "decisions.csv")

    rows = [s.model_dump(mode="json") for s in summaries]
    print_formatted_result(rows, format_type, table=summary_table(rows), title="Policy comparison")
    if format_type == "rich":
        console.print(f"[blue]Read {len(records)} episodes, summary written to {in_dir}[/blue]")

    if proposed_collided(metrics):
        sys.exit(2)
