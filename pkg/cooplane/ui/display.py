"""
Display module for Cooplane package.
"""
import json
from typing import Iterable, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from .. import __version__

console = Console()

COOPLANE_ASCII = r"""
   ____________________________________
     _ _    _ _    _ _    _ _    _ _
    ______                 ______
   |  []  |>     ---->    |  []  |>
   ____________________________________
     _ _    _ _    _ _    _ _    _ _
"""


def print_welcome():
    """Print the welcome message with ASCII art"""
    console.print(Panel.fit(
        Text(COOPLANE_ASCII),
        border_style="blue"
    ))


def print_project_info():
    """Print information about the Cooplane project"""
    description = (
        "Cooplane simulates an automated vehicle in multi-lane traffic. At every decision step it "
        "builds lane-change candidates, predicts how the surrounding drivers react to each of them, "
        "picks the cheapest one and tracks it with a collision-avoiding MPC."
    )

    examples = [
        ("Obstacle in dense traffic:", "cooplane run --scenario case1 --policy PROPOSED --out runs/case1"),
        ("Without interactive prediction:", "cooplane run --scenario case1 --policy PROPOSED_WO_IP --out runs/case1_cv"),
        ("Rule-based baseline:", "cooplane run --scenario case2 --policy IDM_MOBIL --out runs/case2_idm"),
        ("Tune the planner:", "cooplane run --scenario case2 --out runs/case2 mpc.horizon=15 weights.v_des=22"),
        ("Paired batch:", "cooplane batch --episodes 100 --policies PROPOSED,IDM_MOBIL --out runs/batch"),
        ("Summarize a batch:", "cooplane report --in runs/batch"),
        ("Inspect one decision:", "cooplane decide --scenario case1 --predictor interactive"),
        ("Export built-in scenarios:", "cooplane scenarios --export scenarios/"),
    ]

    console.print(Panel.fit(
        Text(description),
        title="About Cooplane",
        border_style="blue"
    ))

    console.print(f"[bold]Version:[/bold] {__version__}")

    console.print("\n[bold]Examples:[/bold]")
    table = Table(show_header=False, box=None, padding=(0, 2))
    for label, cmd in examples:
        table.add_row(f"[bold]{label}[/bold]", f"[green]{cmd}[/green]")
    console.print(table)

    console.print("\n[bold]Key Options:[/bold]")
    options_table = Table(show_header=True, box=None, padding=(0, 2))
    options_table.add_column("Option", style="bold green")
    options_table.add_column("Description")
    options_table.add_row("--scenario", "Built-in scenario name (case1, case2, random3lane) or a scenario JSON file")
    options_table.add_row("--policy", "PROPOSED, PROPOSED_WO_IP or IDM_MOBIL")
    options_table.add_row("--config", "Configuration file (defaults to ~/.cooplane/config.json)")
    options_table.add_row("--log-level", "DEBUG, INFO, WARNING or ERROR")
    console.print(options_table)

    console.print("\n[bold]Commands:[/bold]")
    console.print("  [green]cooplane run[/green]         Run one closed-loop episode")
    console.print("  [green]cooplane batch[/green]       Run paired random-traffic episodes per policy")
    console.print("  [green]cooplane report[/green]      Summarize episode records")
    console.print("  [green]cooplane decide[/green]      Show the cost of every candidate at t = 0")
    console.print("  [green]cooplane scenarios[/green]   List or export the built-in scenarios")
    console.print("  [green]cooplane init[/green]        Write a default configuration")
    console.print("  [green]cooplane --help[/green]      Show help message")


def _fmt(value, digits: int = 2) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def metrics_table(metrics: dict, title: str = "Episode") -> Table:
    """Two-column table of one episode's metrics."""
    table = Table(title=title, show_header=False, padding=(0, 2))
    table.add_column("Metric", style="bold")
    table.add_column("Value", justify="right")
    for key, value in metrics.items():
        if isinstance(value, list):
            value = ", ".join(_fmt(v, 1) for v in value) or "-"
        table.add_row(key, _fmt(value))
    return table


def summary_table(rows: Sequence[dict]) -> Table:
    """Per-policy comparison table."""
    table = Table(title="Policy comparison", header_style="bold blue")
    table.add_column("Policy", style="bold")
    table.add_column("Episodes", justify="right")
    table.add_column("Ego speed [m/s]", justify="right")
    table.add_column("Others speed [m/s]", justify="right")
    table.add_column("Min distance [m]", justify="right")
    table.add_column("Collisions", justify="right")
    table.add_column("Lane changes", justify="right")
    table.add_column("Solver fallbacks", justify="right")
    table.add_column("PROPOSED gain [%]", justify="right")
    for row in rows:
        collisions = row["collisions"]
        table.add_row(
            str(row["policy"]),
            str(row["episodes"]),
            _fmt(row["ego_mean_speed"]),
            _fmt(row["others_mean_speed"]),
            _fmt(row["min_distance"]),
            f"[red]{collisions}[/red]" if collisions else "0",
            _fmt(row["lane_changes"]),
            str(row["solver_failures"]),
            _fmt(row.get("improvement_pct"), 1),
        )
    return table


def cost_table(breakdowns: Iterable[dict], chosen: int, title: str = "Decision costs") -> Table:
    """Cost components of every candidate; the chosen row is highlighted."""
    table = Table(title=title, header_style="bold blue")
    for column in ("#", "Candidate", "J_s", "J_e", "J_c", "J_d"):
        table.add_column(column, justify="left" if column == "Candidate" else "right")
    for b in breakdowns:
        style = "bold green" if b["index"] == chosen else None
        table.add_row(
            str(b["index"]), b["label"], _fmt(b["J_s"]), _fmt(b["J_e"]), _fmt(b["J_c"]), _fmt(b["J_d"]),
            style=style,
        )
    return table


def print_formatted_result(data, format_type="rich", table=None, title="Result"):
    """
    Print a result in the specified format

    Args:
        data: JSON-serializable result
        format_type: Format type (rich, plain, json)
        table: Rich table to show for the rich format
        title: Heading for the plain format
    """
    format_type = format_type.lower()

    if format_type == "rich" and table is not None:
        console.print(table)
    elif format_type == "json":
        console.print_json(json.dumps(data))
    elif format_type == "plain":
        console.print(f"\n--- {title} ---")
        rows = data if isinstance(data, list) else [data]
        for row in rows:
            console.print(", ".join(f"{k}={_fmt(v)}" for k, v in row.items()), markup=False)
        console.print("-" * (len(title) + 8) + "\n")
    else:
        console.print("[yellow]Unknown format type. Using JSON format.[/yellow]")
        console.print_json(json.dumps(data))


def print_error_panel(error_type, error_message, title="Error", recovery_hint=None):
    """
    Print an error panel with optional recovery hint

    Args:
        error_type: Type of error
        error_message: The error message
        title: Panel title
        recovery_hint: Optional recovery hint to help the user resolve the issue
    """
    content = f"[bold red]{error_type}:[/bold red] {error_message}"

    if recovery_hint:
        content += f"\n\n[bold yellow]Recovery Hint:[/bold yellow] {recovery_hint}"

    console.print(Panel.fit(
        content,
        title=title,
        border_style="red"
    ))
