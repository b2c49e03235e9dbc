import json
import os
import re
from pathlib import Path
from typing import Any, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .core import DriverParamRanges, MotionLimits
from .errors import ConfigurationError
from .evaluate import CostWeights
from .harness import EpisodeConfig, Policy
from .planner import MpcConfig
from .predict import PredictorConfig
from .refgen import RefgenParams
from .ui.display import console

ENV_TEMPLATE = """# Cooplane environment configuration
# Values here can be referenced from config.json as ${VAR} or ${VAR:default}

# COOPLANE_LOG_LEVEL=INFO
"""


class HarnessConfig(BaseModel):
    """Closed-loop settings shared by run and batch."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    replan_period: float = Field(1.0, gt=0.0)
    abort_factor: float = Field(2.0, ge=0.0)
    history_seconds: float = Field(2.0, ge=0.0)
    workers: int = Field(1, ge=1)


class AppConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    weights: CostWeights = CostWeights()
    mpc: MpcConfig = MpcConfig()
    refgen: RefgenParams = RefgenParams()
    predictor: PredictorConfig = PredictorConfig()
    limits: MotionLimits = MotionLimits()
    harness: HarnessConfig = HarnessConfig()
    driver: DriverParamRanges = DriverParamRanges()


def config_dir() -> Path:
    return Path.home() / ".cooplane"


def ensure_config_exists(force: bool = False) -> bool:
    """
    Write a default config.json and .env into ~/.cooplane.

    Returns False without touching anything when a configuration already exists and
    ``force`` is not set.
    """
    directory = config_dir()
    config_path = directory / "config.json"
    env_path = directory / ".env"

    if config_path.exists() and not force:
        return False

    if not directory.exists():
        directory.mkdir(parents=True, exist_ok=True)
        console.print(f"[green]Created Cooplane config directory: {directory}[/green]")

    with open(config_path, "w") as f:
        json.dump(AppConfig().model_dump(mode="json"), f, indent=2)
    console.print(f"[green]Created default config file: {config_path}[/green]")

    if not env_path.exists() or force:
        with open(env_path, "w") as f:
            f.write(ENV_TEMPLATE)
        console.print(f"[green]Created environment file: {env_path}[/green]")
    return True


def substitute_env_vars(value: Any) -> Any:
    """
    Recursively substitute environment variables in configuration values.
    Supports ${VAR_NAME} and ${VAR_NAME:default} syntax.
    """
    if isinstance(value, str):
        pattern = r'\$\{([^}:]+)(?::([^}]*))?\}'

        def replace_var(match):
            var_name = match.group(1)
            default_value = match.group(2) if match.group(2) is not None else ""
            return os.environ.get(var_name, default_value)

        return re.sub(pattern, replace_var, value)

    elif isinstance(value, dict):
        return {k: substitute_env_vars(v) for k, v in value.items()}

    elif isinstance(value, list):
        return [substitute_env_vars(item) for item in value]

    else:
        return value


def load_env_files(config_path: Optional[Path] = None) -> None:
    """Load ~/.cooplane/.env and a .env next to an explicit config file, if present."""
    candidates = [config_dir() / ".env"]
    if config_path is not None:
        candidates.append(Path(config_path).parent / ".env")
    for env_file in candidates:
        if env_file.exists():
            load_dotenv(env_file)


def load_config(path: Optional[Path] = None) -> AppConfig:
    """
    Load the application configuration.

    Uses ``path`` when given, else ~/.cooplane/config.json when it exists, else the
    built-in defaults. Environment variables are substituted after loading .env files.

    Raises:
        ConfigurationError: If the file is missing, is not valid JSON or fails validation.
    """
    load_env_files(path)
    if path is None:
        default_path = config_dir() / "config.json"
        if not default_path.exists():
            return AppConfig()
        path = default_path
    path = Path(path)

    if not path.exists():
        raise ConfigurationError(f"Configuration file not found: {path}")
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Error parsing configuration file {path}: {e}")

    try:
        return AppConfig.model_validate(substitute_env_vars(raw))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration in {path}: {e}")


def episode_config_from(
    app: AppConfig,
    scenario: str = "case1",
    policy: Policy = Policy.PROPOSED,
    seed: int = 0,
    density: Optional[float] = None,
    duration: Optional[float] = None,
) -> EpisodeConfig:
    """Combine the application configuration with per-run choices."""
    return EpisodeConfig(
        scenario=scenario,
        policy=policy,
        seed=seed,
        density=density,
        duration=duration,
        replan_period=app.harness.replan_period,
        abort_factor=app.harness.abort_factor,
        history_seconds=app.harness.history_seconds,
        weights=app.weights,
        mpc=app.mpc,
        refgen=app.refgen,
        predictor=app.predictor,
        limits=app.limits,
        driver=app.driver,
    )
