"""
Experiment files: INI text with [mission], [noise], [initial_guess], [solver]
and [network] sections, validated into the pydantic option models.
"""
import configparser
from pathlib import Path
from typing import Dict, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from models.errors import ConfigError
from models.schemas import MissionSpec, NetworkProfile, NoiseModel, SolverOptions
from utils.logger import get_logger

logger = get_logger("experiment")

KNOWN_SECTIONS = ("mission", "noise", "initial_guess", "solver", "network")


class InitialGuessSpec(BaseModel):
    """Perturbation of the ground truth written as vertex poses by `generate`."""
    magnitude_rot: float = Field(0.0, ge=0, description="Maximum rotation perturbation (radians)")
    magnitude_trans: float = Field(0.0, ge=0, description="Maximum translation perturbation per axis (meters)")
    seed: int = Field(0, ge=0, description="Seed of the perturbation")


class ExperimentConfig(BaseModel):
    """Everything one experiment file can configure."""
    mission: MissionSpec = Field(default_factory=MissionSpec)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    network: NetworkProfile = Field(default_factory=NetworkProfile)
    initial_guess: Optional[InitialGuessSpec] = Field(None, description="Perturbed ground truth instead of odometry")


def _section(parser: configparser.ConfigParser, name: str) -> Dict[str, str]:
    if not parser.has_section(name):
        return {}
    return {key: value.strip() for key, value in parser.items(name) if value.strip() != ""}


def parse_experiment(text: str) -> ExperimentConfig:
    """Parse experiment text; every problem is reported as ConfigError."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Malformed experiment file: {e}")

    unknown = [name for name in parser.sections() if name not in KNOWN_SECTIONS]
    if unknown:
        raise ConfigError(f"Unknown sections in experiment file: {unknown}")

    try:
        mission = dict(_section(parser, "mission"))
        mission["noise"] = NoiseModel(**_section(parser, "noise"))
        config = ExperimentConfig(
            mission=MissionSpec(**mission),
            solver=SolverOptions(**_section(parser, "solver")),
            network=NetworkProfile(**_section(parser, "network")),
            initial_guess=InitialGuessSpec(**_section(parser, "initial_guess"))
            if parser.has_section("initial_guess") else None,
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment configuration: {e.error_count()} error(s)\n{e}")

    logger.debug(f"Loaded experiment: {config.mission.num_robots} robots x {config.mission.poses_per_robot} poses")
    return config


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """Read and parse an experiment file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"Cannot read experiment file {path}: {e}")
    return parse_experiment(text)
