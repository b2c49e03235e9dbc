import functools
import sys

from .errors import (
    CooplaneError, ScenarioError, ProfileError, DimensionError,
    SolverError, ConfigurationError, InputError, OutputError
)
from .ui.display import print_error_panel


def handle_command_errors(func):
    """Decorator to handle errors in CLI commands."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ScenarioError as e:
            print_error_panel("Scenario Error", str(e), "Invalid Scenario", e.recovery_hint)
            sys.exit(1)
        except ProfileError as e:
            print_error_panel("Profile Error", str(e), "Reference Generation Failed", e.recovery_hint)
            sys.exit(1)
        except DimensionError as e:
            print_error_panel("Dimension Error", str(e), "Problem Setup Failed", e.recovery_hint)
            sys.exit(1)
        except SolverError as e:
            print_error_panel("Solver Error", str(e), "Optimization Failed", e.recovery_hint)
            sys.exit(1)
        except ConfigurationError as e:
            print_error_panel("Configuration Error", str(e), "Invalid Configuration", e.recovery_hint)
            sys.exit(1)
        except InputError as e:
            print_error_panel("Input Error", str(e), "Invalid Input", e.recovery_hint)
            sys.exit(1)
        except OutputError as e:
            print_error_panel("Output Error", str(e), "Unreadable Records", e.recovery_hint)
            sys.exit(1)
        except CooplaneError as e:
            print_error_panel("Cooplane Error", str(e), "Error", e.recovery_hint)
            sys.exit(1)
        except Exception as e:
            print_error_panel("Unexpected Error", str(e), "Unhandled Error",
                              "Re-run with --log-level DEBUG and report the output")
            sys.exit(1)
    return wrapper
