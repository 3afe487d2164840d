from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple
import math

import numpy as np

from .domain import (
    ClassifierConfig,
    CongestionConfig,
    CostWeights,
    JobClass,
    NetworkMatrix,
)
from .exceptions import InvariantError


__all__ = [
    "SiteSpec",
    "UserSpec",
    "DistributionSpec",
    "JobSpec",
    "GroupSpec",
    "GeneratorSpec",
    "CrashSpec",
    "Workload",
    "BulkConfig",
    "MigrationConfig",
    "AgingConfig",
    "OverlayConfig",
    "SimConfig",
    "Scenario",
]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvariantError(message)


def _finite(value: float) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _whole(value: int, low: int) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= low


def _check_sizes(spec) -> None:
    for name in ("input_size", "output_size", "executable_size"):
        value = getattr(spec, name)
        _require(
            _finite(value) and value >= 0,
            f"'{name}' must be a number >= 0. Got {value!r} instead.",
        )


def _check_job(spec) -> None:
    """Fields every trace entry and group shares with a Job."""
    _require(
        _whole(spec.processors, 1),
        f"'processors' must be an int >= 1. Got {spec.processors!r} instead.",
    )
    _require(
        _finite(spec.service_time) and spec.service_time >= 0,
        f"'service_time' must be a number >= 0. Got {spec.service_time!r} instead.",
    )
    _require(
        _finite(spec.submit_time) and spec.submit_time >= 0,
        f"'submit_time' must be >= 0. Got {spec.submit_time!r} instead.",
    )
    _check_sizes(spec)


@dataclass(frozen=True)
class SiteSpec:
    """
    A site as declared in a scenario.

    ``initial_load`` is the share of CPUs held by non-grid work for the whole
    run. ``nodes`` machines of the site join the overlay.
    """

    id: str
    cpu_count: int
    compute_capability: float = 1.0
    initial_load: float = 0.0
    datasets: Tuple[str, ...] = ()
    availability: float = 1.0
    nodes: int = 1
    max_jobs_per_user: Optional[int] = None

    def __post_init__(self) -> None:
        _require(
            isinstance(self.cpu_count, int) and self.cpu_count >= 1,
            f"'cpu_count' must be an int >= 1. Got {self.cpu_count} instead.",
        )
        _require(
            _finite(self.compute_capability) and self.compute_capability > 0,
            f"'compute_capability' must be > 0. Got {self.compute_capability} instead.",
        )
        _require(
            0.0 <= self.initial_load < 1.0,
            f"'initial_load' must lie in [0, 1). Got {self.initial_load} instead.",
        )
        _require(
            0.0 < self.availability <= 1.0,
            f"'availability' must lie in (0, 1]. Got {self.availability} instead.",
        )
        _require(
            isinstance(self.nodes, int) and self.nodes >= 1,
            f"'nodes' must be an int >= 1. Got {self.nodes} instead.",
        )
        _require(
            self.max_jobs_per_user is None or self.max_jobs_per_user >= 1,
            f"'max_jobs_per_user' must be >= 1. Got {self.max_jobs_per_user} instead.",
        )

    @property
    def reserved(self) -> int:
        """Slots taken by background work."""
        return min(self.cpu_count - 1, round(self.initial_load * self.cpu_count))


@dataclass(frozen=True)
class UserSpec:
    id: str
    quota: float

    def __post_init__(self) -> None:
        _require(
            _finite(self.quota) and self.quota > 0,
            f"'quota' must be > 0. Got {self.quota} instead.",
        )


@dataclass(frozen=True)
class DistributionSpec:
    """Service time law: ``constant`` (value), ``exponential`` (mean = value) or ``uniform`` (low, high)."""

    kind: str = "constant"
    value: float = 1.0
    low: float = 0.0
    high: float = 0.0

    KINDS = ("constant", "exponential", "uniform")

    def __post_init__(self) -> None:
        _require(
            self.kind in self.KINDS,
            f"'kind' must be one of {list(self.KINDS)}. Got {self.kind} instead.",
        )
        _require(
            _finite(self.value) and self.value >= 0,
            f"'value' must be >= 0. Got {self.value} instead.",
        )
        if self.kind == "uniform":
            _require(
                0 <= self.low <= self.high,
                f"'low' and 'high' must satisfy 0 <= low <= high. Got {self.low}, {self.high} instead.",
            )

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return (self.low + self.high) / 2
        return self.value

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        match self.kind:
            case "exponential":
                return rng.exponential(self.value, size)
            case "uniform":
                return rng.uniform(self.low, self.high, size)
            case _:
                return np.full(size, float(self.value))


@dataclass(frozen=True)
class JobSpec:
    """An explicit trace entry. ``count`` copies arrive together; ``burst`` queues them shortest first."""

    id: str
    owner: str
    site: str
    submit_time: float = 0.0
    processors: int = 1
    input_size: float = 0.0
    output_size: float = 0.0
    executable_size: float = 0.0
    service_time: float = 1.0
    dataset: Optional[str] = None
    job_class: Optional[JobClass] = None
    count: int = 1
    burst: bool = False

    def __post_init__(self) -> None:
        _check_job(self)
        _require(_whole(self.count, 1), f"'count' must be an int >= 1. Got {self.count!r} instead.")


@dataclass(frozen=True)
class GroupSpec:
    """A bulk submission of ``size`` identical jobs."""

    id: str
    owner: str
    site: str
    size: int
    submit_time: float = 0.0
    processors: int = 1
    input_size: float = 0.0
    output_size: float = 0.0
    executable_size: float = 0.0
    service_time: float = 1.0
    dataset: Optional[str] = None
    job_class: Optional[JobClass] = None
    division_factor: int = 1
    destination: Optional[str] = None

    def __post_init__(self) -> None:
        _require(_whole(self.size, 1), f"'size' must be an int >= 1. Got {self.size!r} instead.")
        _check_job(self)
        _require(
            _whole(self.division_factor, 1),
            f"'division_factor' must be >= 1. Got {self.division_factor} instead.",
        )


@dataclass(frozen=True)
class GeneratorSpec:
    """
    A seeded job stream.

    ``poisson`` draws exponential gaps at ``rate`` jobs per hour, ``burst``
    submits ``burst_size`` jobs every ``every`` hours and ``uniform`` spreads
    arrival times uniformly over [start, end].
    """

    name: str
    owners: Tuple[str, ...]
    sites: Tuple[str, ...]
    kind: str = "poisson"
    count: int = 100
    rate: float = 1.0
    start: float = 0.0
    end: Optional[float] = None
    every: float = 1.0
    burst_size: int = 10
    service: DistributionSpec = DistributionSpec()
    processors: Tuple[int, ...] = (1,)
    input_size: float = 0.0
    output_size: float = 0.0
    executable_size: float = 0.0
    datasets: Tuple[str, ...] = ()
    job_class: Optional[JobClass] = None

    KINDS = ("poisson", "burst", "uniform")

    def __post_init__(self) -> None:
        _require(
            self.kind in self.KINDS,
            f"'kind' must be one of {list(self.KINDS)}. Got {self.kind} instead.",
        )
        _require(bool(self.owners), f"Generator {self.name}: 'owners' must not be empty.")
        _require(bool(self.sites), f"Generator {self.name}: 'sites' must not be empty.")
        _require(self.count >= 0, f"'count' must be >= 0. Got {self.count} instead.")
        _require(self.rate > 0, f"'rate' must be > 0. Got {self.rate} instead.")
        _require(self.every > 0, f"'every' must be > 0. Got {self.every} instead.")
        _require(
            self.burst_size >= 1, f"'burst_size' must be >= 1. Got {self.burst_size} instead."
        )
        _require(
            bool(self.processors) and all(_whole(count, 1) for count in self.processors),
            f"'processors' must hold ints >= 1. Got {list(self.processors)} instead.",
        )
        _check_sizes(self)
        if self.kind == "uniform":
            _require(
                self.end is not None and self.end >= self.start,
                f"Generator {self.name}: 'end' must be >= start={self.start}. Got {self.end} instead.",
            )


@dataclass(frozen=True)
class CrashSpec:
    node: str
    time: float

    def __post_init__(self) -> None:
        _require(self.time >= 0, f"'time' must be >= 0. Got {self.time} instead.")


@dataclass(frozen=True)
class Workload:
    jobs: Tuple[JobSpec, ...] = ()
    groups: Tuple[GroupSpec, ...] = ()
    generators: Tuple[GeneratorSpec, ...] = ()


@dataclass(frozen=True)
class BulkConfig:
    """How the VO splits bulk groups. A division factor wins over a fixed size."""

    subgroup_size: Optional[int] = None
    division_factor: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("subgroup_size", "division_factor"):
            value = getattr(self, name)
            _require(value is None or value >= 1, f"'{name}' must be >= 1. Got {value} instead.")


@dataclass(frozen=True)
class MigrationConfig:
    enabled: bool = True
    boost: float = 0.25
    interval: float = 0.25
    max_candidates: int = 8
    max_exports: int = 4

    def __post_init__(self) -> None:
        _require(0.0 <= self.boost < 1.0, f"'boost' must lie in [0, 1). Got {self.boost} instead.")
        _require(self.interval > 0, f"'interval' must be > 0. Got {self.interval} instead.")
        _require(
            self.max_candidates >= 1,
            f"'max_candidates' must be >= 1. Got {self.max_candidates} instead.",
        )
        _require(
            self.max_exports >= 1, f"'max_exports' must be >= 1. Got {self.max_exports} instead."
        )


@dataclass(frozen=True)
class AgingConfig:
    """Optional explicit aging on top of reprioritization: priority gained per hour waited."""

    enabled: bool = False
    rate: float = 0.05

    def __post_init__(self) -> None:
        _require(self.rate >= 0, f"'rate' must be >= 0. Got {self.rate} instead.")

    @property
    def coefficient(self) -> float:
        return self.rate if self.enabled else 0.0


@dataclass(frozen=True)
class OverlayConfig:
    subgrid_min: int = 0
    heartbeat: float = 1.0 / 60.0
    timeout_beats: int = 3

    def __post_init__(self) -> None:
        _require(self.subgrid_min >= 0, f"'subgrid_min' must be >= 0. Got {self.subgrid_min} instead.")
        _require(self.heartbeat > 0, f"'heartbeat' must be > 0. Got {self.heartbeat} instead.")
        _require(
            self.timeout_beats >= 1,
            f"'timeout_beats' must be >= 1. Got {self.timeout_beats} instead.",
        )

    @property
    def detection_delay(self) -> float:
        return self.heartbeat * self.timeout_beats


@dataclass(frozen=True)
class SimConfig:
    weights: CostWeights = CostWeights()
    normalize_costs: bool = False
    classifier: ClassifierConfig = ClassifierConfig()
    bulk: BulkConfig = BulkConfig()
    congestion: CongestionConfig = CongestionConfig()
    migration: MigrationConfig = MigrationConfig()
    aging: AgingConfig = AgingConfig()
    overlay: OverlayConfig = OverlayConfig()
    transfer_delay: bool = True
    message_latency: float = 0.0

    def __post_init__(self) -> None:
        _require(
            self.message_latency >= 0,
            f"'message_latency' must be >= 0. Got {self.message_latency} instead.",
        )


@dataclass(frozen=True)
class Scenario:
    """Everything one simulation needs apart from the policy and the seed."""

    name: str
    sites: Tuple[SiteSpec, ...]
    edges: NetworkMatrix
    users: Tuple[UserSpec, ...]
    workload: Workload = Workload()
    crashes: Tuple[CrashSpec, ...] = ()
    config: SimConfig = SimConfig()
    source: Optional[str] = field(default=None, compare=False)

    @property
    def site_ids(self) -> Tuple[str, ...]:
        return tuple(site.id for site in self.sites)

    @property
    def quotas(self) -> Dict[str, float]:
        return {user.id: user.quota for user in self.users}

    def site(self, site_id: str) -> SiteSpec:
        for site in self.sites:
            if site.id == site_id:
                return site
        raise InvariantError(f"Scenario {self.name} has no site {site_id}.")
