import rich_click as click

from . import __version__
from .config import load_env_files
from .ui.display import print_welcome, print_project_info
from .utils import setup_logging

# Configure rich-click
click.rich_click.USE_RICH_MARKUP = True
click.rich_click.STYLE_HELPTEXT = "cyan"
click.rich_click.STYLE_OPTION = "bold green"
click.rich_click.STYLE_COMMAND = "bold yellow"


@click.group(invoke_without_command=True)
@click.version_option(__version__, prog_name="Cooplane")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="Logging verbosity (default WARNING, or COOPLANE_LOG_LEVEL)")
@click.pass_context
def main(ctx, log_level):
    """[bold]Cooplane - cooperation-aware lane changes in simulated traffic[/bold] :car:"""
    load_env_files()
    setup_logging(log_level)
    if ctx.invoked_subcommand is None:
        print_welcome()
        print_project_info()


# Import and register commands
from .commands.init import init
from .commands.run import run
from .commands.batch import batch
from .commands.report import report
from .commands.decide import decide
from .commands.scenarios import list_scenarios_command

# Add commands to the CLI
main.add_command(init, name="init")
main.add_command(run, name="run")
main.add_command(batch, name="batch")
main.add_command(report, name="report")
main.add_command(decide, name="decide")
main.add_command(list_scenarios_command, name="scenarios")

if __name__ == "__main__":
    main()
