"""
Error handling module for Cooplane package.
"""
from typing import Optional


class CooplaneError(Exception):
    """Base exception class for Cooplane errors"""
    def __init__(self, message: str, recovery_hint: Optional[str] = None):
        self.message = message
        self.recovery_hint = recovery_hint or get_recovery_hint(type(self).__name__)
        super().__init__(message)


class ScenarioError(CooplaneError, ValueError):
    """Scenario is malformed or its initial state is invalid"""
    pass


class ProfileError(CooplaneError, ValueError):
    """Acceleration profile inputs are invalid or the manoeuvre does not fit"""
    pass


class DimensionError(CooplaneError, ValueError):
    """Array dimensions of a problem or reference do not match"""
    pass


class SolverError(CooplaneError):
    """The numerical solver was used incorrectly"""
    pass


class ConfigurationError(CooplaneError):
    """Configuration file could not be parsed or validated"""
    pass


class InputError(CooplaneError, ValueError):
    """Invalid input parameters"""
    pass


class OutputError(CooplaneError):
    """Run outputs are missing or unreadable"""
    pass


def get_recovery_hint(error_type: str) -> str:
    """Return recovery hints based on error type"""
    hints = {
        "ScenarioError": "Check that no two vehicles overlap and that every vehicle starts inside the drivable area.",
        "ProfileError": "Use positive acceleration and jerk limits, or increase the reference duration.",
        "DimensionError": "Make sure the reference and predictions cover the whole optimization horizon.",
        "SolverError": "Review the problem callbacks and solver options.",
        "ConfigurationError": "Run 'cooplane init --force' to regenerate a default configuration.",
        "InputError": "Review your command parameters and ensure they're correctly formatted.",
        "OutputError": "Point --in at a directory produced by 'cooplane run' or 'cooplane batch'.",
    }
    return hints.get(error_type, "Please check your inputs and try again.")
