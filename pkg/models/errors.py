"""
Exception hierarchy shared by all CertiPGO services.
"""
from typing import Optional


class PGOError(Exception):
    """Base class for every error raised by the backend."""


class NodeNotFound(PGOError, KeyError):
    """A NodeId (or vertex id) does not exist in the graph."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class ParseError(PGOError):
    """Malformed input text; carries the 1-based line number when known."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")


class IncompleteSolution(PGOError):
    """A pose map does not cover every node of the graph."""


class InvalidTrajectory(PGOError):
    """Trajectory timestamps are not strictly increasing."""


class InvalidPose(PGOError, ValueError):
    """Rotation is not orthonormal with unit determinant."""


class InvalidGraph(PGOError):
    """The graph failed structural validation."""


class SpecError(PGOError, ValueError):
    """A mission specification cannot be realized."""


class ConfigError(PGOError):
    """An experiment configuration file is malformed."""


class DimensionMismatch(PGOError, ValueError):
    """Array shapes do not match the assembled problem."""


class StationarityViolation(PGOError):
    """The dual certificate was requested away from a critical point."""


class RankLimitReached(PGOError):
    """The rank staircase cannot grow beyond r_max."""


class SaddleEscapeFailed(PGOError):
    """No step along the escape direction lowered the cost."""


class DegenerateSolution(PGOError):
    """The lifted solution collapsed below rank d."""


class InsufficientMatches(PGOError):
    """Not enough rendezvous data for an alignment."""


class KeyMismatch(PGOError):
    """Two pose maps do not share the same key set."""
