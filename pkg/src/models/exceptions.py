from typing import Optional


__all__ = [
    "GridSimError",
    "InvariantError",
    "NoAliveSite",
    "CapacityExceeded",
    "IncompleteGroup",
    "OutOfRange",
    "AlreadyMigrated",
    "JobRunning",
    "DuplicateJoin",
    "NoStandby",
    "NotSteadyState",
    "ScenarioInvalid",
    "ParseError",
    "ValidationError",
]


class GridSimError(Exception):
    """Root of every error raised by the simulator."""


class InvariantError(GridSimError, ValueError):
    """A value broke one of its type invariants."""


class NoAliveSite(GridSimError, LookupError):
    """Every candidate site is dead or ineligible."""


class CapacityExceeded(GridSimError, RuntimeError):
    """A job group does not fit the capacity left in the VO."""


class IncompleteGroup(GridSimError, RuntimeError):
    """Aggregation was requested before every subgroup finished."""


class OutOfRange(GridSimError, ValueError):
    """A priority fell outside [-1, 1)."""


class AlreadyMigrated(GridSimError, RuntimeError):
    """The job was already moved once and may not move again."""


class JobRunning(GridSimError, RuntimeError):
    """Running jobs are never moved (non-preemptive scheduling)."""


class DuplicateJoin(GridSimError, ValueError):
    """A node tried to join the overlay twice."""


class NoStandby(GridSimError, RuntimeError):
    """A SubGrid root failed with nobody to take over."""


class NotSteadyState(GridSimError, RuntimeError):
    """The metrics window is not in steady state."""


class ScenarioInvalid(GridSimError, ValueError):
    def __init__(
        self, message: str, field: Optional[str] = None, location: Optional[str] = None
    ) -> None:
        """
        Error raised for a scenario file that cannot be used.

        Args:
            message (str): Human readable reason.
            field (str, optional): Dotted path of the offending field. Defaults to None.
            location (str, optional): "file:line:column" of the offending node. Defaults to None.
        """
        self.field = field
        self.location = location
        prefix = f"{location}: " if location else ""
        suffix = f" [{field}]" if field else ""
        super().__init__(f"{prefix}{message}{suffix}")


class ParseError(ScenarioInvalid):
    """The scenario file is not well-formed YAML or has the wrong shape."""


class ValidationError(ScenarioInvalid):
    """The scenario file parsed but a value breaks a documented rule."""
