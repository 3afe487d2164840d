from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple
from enum import Enum
import math

from .exceptions import AlreadyMigrated, InvariantError


__all__ = [
    "JobState",
    "JobClass",
    "Job",
    "JobGroup",
    "SiteState",
    "NetworkEdge",
    "NetworkMatrix",
    "CostWeights",
    "CostBreakdown",
    "PriorityContext",
    "LittleCheck",
    "CongestionConfig",
    "ClassifierConfig",
]


class JobState(Enum):
    SUBMITTED = "submitted"
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    MIGRATED = "migrated"


class JobClass(Enum):
    COMPUTE_INTENSIVE = "compute"
    DATA_INTENSIVE = "data"
    BOTH = "both"


# Allowed lifecycle moves. MIGRATED is the in-flight state between two sites.
_TRANSITIONS = {
    JobState.SUBMITTED: {JobState.QUEUED},
    JobState.QUEUED: {JobState.RUNNING, JobState.MIGRATED},
    JobState.MIGRATED: {JobState.QUEUED},
    JobState.RUNNING: {JobState.COMPLETED},
    JobState.COMPLETED: set(),
}


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise InvariantError(message)


@dataclass
class Job:
    """
    Unit of work submitted by a user.

    Sizes are in megabytes and ``service_time`` in simulated hours on one
    execution slot. ``priority`` is the queue priority in (-1, 1).
    """

    id: str
    owner: str
    processors_required: int = 1
    input_size: float = 0.0
    output_size: float = 0.0
    executable_size: float = 0.0
    service_time: float = 1.0
    priority: float = 0.0
    enqueue_timestamp: float = 0.0
    migrated_flag: bool = False
    origin_site: Optional[str] = None
    current_site: Optional[str] = None
    state: JobState = JobState.SUBMITTED
    group_id: Optional[str] = None
    dataset: Optional[str] = None
    job_class: Optional[JobClass] = None

    def __post_init__(self) -> None:
        _check(
            isinstance(self.processors_required, int) and self.processors_required >= 1,
            f"Job {self.id}: 'processors_required' must be an int >= 1. Got {self.processors_required} instead.",
        )
        for name in ("input_size", "output_size", "executable_size", "service_time"):
            value = getattr(self, name)
            _check(
                value >= 0 and math.isfinite(value),
                f"Job {self.id}: '{name}' must be finite and >= 0. Got {value} instead.",
            )
        if self.state is JobState.QUEUED:
            self._check_priority(self.priority)

    def _check_priority(self, value: float) -> None:
        _check(
            -1.0 < value < 1.0,
            f"Job {self.id}: queued priority must lie in (-1, 1). Got {value} instead.",
        )

    @property
    def total_data(self) -> float:
        return self.input_size + self.output_size + self.executable_size

    def transition(self, state: JobState) -> None:
        """
        Move the job to a new lifecycle state.

        Args:
            state (JobState): Target state.

        Raises:
            InvariantError: If the move is not allowed (e.g. Running -> Queued).
        """
        _check(
            state in _TRANSITIONS[self.state],
            f"Job {self.id}: illegal transition {self.state.value} -> {state.value}.",
        )
        self.state = state

    def set_priority(self, value: float) -> None:
        if self.state is JobState.QUEUED:
            self._check_priority(value)
        self.priority = value

    def mark_migrated(self) -> None:
        """Set the migrated flag; it can only be set once."""
        if self.migrated_flag:
            raise AlreadyMigrated(f"Job {self.id} has already been migrated once.")
        self.migrated_flag = True


@dataclass
class JobGroup:
    """A bulk submission scheduled as one unit."""

    id: str
    owner: str
    jobs: List[Job]
    declared_size: int
    division_factor: int = 1
    parent_id: Optional[str] = None

    def __post_init__(self) -> None:
        _check(
            self.declared_size == len(self.jobs),
            f"Group {self.id}: declared size {self.declared_size} != {len(self.jobs)} jobs.",
        )
        _check(
            self.division_factor >= 1,
            f"Group {self.id}: 'division_factor' must be >= 1. Got {self.division_factor} instead.",
        )
        owners = {job.owner for job in self.jobs}
        _check(
            owners <= {self.owner},
            f"Group {self.id}: every job must belong to {self.owner}. Got {sorted(owners)} instead.",
        )

    @property
    def lineage(self) -> str:
        """Id of the original group this (sub)group descends from."""
        return self.parent_id or self.id

    def __len__(self) -> int:
        return len(self.jobs)


@dataclass
class SiteState:
    """Point-in-time view of a site, as read by the cost model."""

    id: str
    cpu_count: int
    compute_capability: float = 1.0
    waiting_queue_length: int = 0
    site_load: float = 0.0
    alive: bool = True
    hosted_datasets: FrozenSet[str] = frozenset()

    def __post_init__(self) -> None:
        _check(
            self.cpu_count >= 1,
            f"Site {self.id}: 'cpu_count' must be >= 1. Got {self.cpu_count} instead.",
        )
        _check(
            self.compute_capability >= 0,
            f"Site {self.id}: 'compute_capability' must be >= 0. Got {self.compute_capability} instead.",
        )
        _check(
            0.0 <= self.site_load <= 1.0,
            f"Site {self.id}: 'site_load' must lie in [0, 1]. Got {self.site_load} instead.",
        )
        _check(
            self.waiting_queue_length >= 0,
            f"Site {self.id}: 'waiting_queue_length' must be >= 0. Got {self.waiting_queue_length} instead.",
        )
        self.hosted_datasets = frozenset(self.hosted_datasets)


@dataclass(frozen=True)
class NetworkEdge:
    """Directed link; bandwidth in MB/s, loss as a fraction."""

    source: str
    destination: str
    bandwidth: float
    loss_rate: float = 0.0

    def __post_init__(self) -> None:
        _check(
            self.bandwidth > 0 and math.isfinite(self.bandwidth),
            f"Edge {self.source}->{self.destination}: 'bandwidth' must be > 0. Got {self.bandwidth} instead.",
        )
        _check(
            0.0 <= self.loss_rate < 1.0,
            f"Edge {self.source}->{self.destination}: 'loss_rate' must lie in [0, 1). Got {self.loss_rate} instead.",
        )


NetworkMatrix = Dict[Tuple[str, str], NetworkEdge]


@dataclass(frozen=True)
class CostWeights:
    w5: float = 1.0
    w6: float = 1.0
    w7: float = 1.0

    def __post_init__(self) -> None:
        for name in ("w5", "w6", "w7"):
            value = getattr(self, name)
            _check(value >= 0, f"Weight '{name}' must be >= 0. Got {value} instead.")


@dataclass(frozen=True)
class CostBreakdown:
    network_cost: float
    computation_cost: float
    data_transfer_cost: float
    total_cost: float

    def __post_init__(self) -> None:
        parts = (self.network_cost, self.computation_cost, self.data_transfer_cost)
        _check(
            all(part >= 0 and math.isfinite(part) for part in parts),
            f"Cost components must be finite and >= 0. Got {parts} instead.",
        )
        _check(
            self.total_cost == parts[0] + parts[1] + parts[2],
            f"Total cost {self.total_cost} is not the sum of {parts}.",
        )

    @classmethod
    def of(cls, network: float, computation: float, transfer: float) -> "CostBreakdown":
        """Build a breakdown whose total is the exact sum of its parts."""
        return cls(network, computation, transfer, network + computation + transfer)


@dataclass(frozen=True)
class PriorityContext:
    """
    Inputs of the queue threshold for one job at one arrival instant.

    Attributes:
        n: The owner's jobs in all queues, including the new job.
        t: Processors required by the job.
        total_processors: T, processors required by every queued job.
        quota: q, the owner's quota.
        quota_sum: Q, quotas of all distinct users with queued jobs.
        total_jobs: L, jobs in all queues including the new job.
    """

    n: int
    t: int
    total_processors: int
    quota: float
    quota_sum: float
    total_jobs: int

    def __post_init__(self) -> None:
        _check(self.n >= 1, f"'n' must be >= 1. Got {self.n} instead.")
        _check(self.t >= 1, f"'t' must be >= 1. Got {self.t} instead.")
        _check(
            self.total_jobs >= self.n,
            f"'total_jobs' must be >= n={self.n}. Got {self.total_jobs} instead.",
        )
        _check(
            self.total_processors >= self.t,
            f"'total_processors' must be >= t={self.t}. Got {self.total_processors} instead.",
        )
        _check(self.quota > 0, f"'quota' must be > 0. Got {self.quota} instead.")
        _check(
            self.quota_sum >= self.quota,
            f"'quota_sum' must be >= quota={self.quota}. Got {self.quota_sum} instead.",
        )

    @property
    def threshold(self) -> float:
        """N = (q x T) / (Q x t)."""
        return (self.quota * self.total_processors) / (self.quota_sum * self.t)


@dataclass(frozen=True)
class LittleCheck:
    """Observed queue length, arrival rate (jobs/h) and wait (h)."""

    avg_queue_length: float
    arrival_rate: float
    avg_wait: float

    @property
    def residual(self) -> float:
        return abs(self.avg_queue_length - self.arrival_rate * self.avg_wait) / max(
            self.avg_queue_length, 1e-12
        )


@dataclass(frozen=True)
class CongestionConfig:
    thrs: float = 0.25
    window_length: int = 100

    def __post_init__(self) -> None:
        _check(
            0.0 <= self.thrs <= 1.0,
            f"'thrs' must lie in [0, 1]. Got {self.thrs} instead.",
        )
        _check(
            self.window_length >= 1,
            f"'window_length' must be >= 1. Got {self.window_length} instead.",
        )


@dataclass(frozen=True)
class ClassifierConfig:
    """Cutoffs on transfer time over service time that separate the job classes."""

    data_dominance_ratio: float = 2.0
    compute_dominance_ratio: float = 2.0

    def __post_init__(self) -> None:
        for name in ("data_dominance_ratio", "compute_dominance_ratio"):
            value = getattr(self, name)
            _check(value > 0, f"'{name}' must be > 0. Got {value} instead.")
