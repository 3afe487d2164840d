from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np

from src.models import InvariantError, LittleCheck, NotSteadyState

from .bulk_scheduler import AggregatedResult, GroupPlacement
from .migrator import PeerQueueReport


__all__ = [
    "JobRecord",
    "MigrationRecord",
    "SiteSample",
    "SiteTotals",
    "Metrics",
    "STEADY_TOLERANCE",
    "default_window",
    "little_terms",
    "littles_check",
]


logger = logging.getLogger(__name__)

# Completions in the window must be within this share of arrivals
STEADY_TOLERANCE = 0.05


@dataclass
class JobRecord:
    """Lifecycle timestamps of one job, in simulated hours."""

    job_id: str
    owner: str
    group_id: Optional[str]
    origin_site: str
    site: str
    job_class: str
    processors: int
    service_time: float
    submit_time: float
    priority_at_submit: Optional[float] = None
    start_time: Optional[float] = None
    priority_at_start: Optional[float] = None
    queue_at_start: Optional[int] = None
    completion_time: Optional[float] = None
    transit_time: float = 0.0
    migrated: bool = False

    @property
    def finished(self) -> bool:
        return self.completion_time is not None

    @property
    def response_time(self) -> Optional[float]:
        """Submission to start."""
        if self.start_time is None:
            return None
        return self.start_time - self.submit_time

    @property
    def queue_time(self) -> Optional[float]:
        """Meta-scheduler and local queue time. Migration transit is left out."""
        if self.start_time is None:
            return None
        return self.start_time - self.submit_time - self.transit_time

    @property
    def execution_time(self) -> Optional[float]:
        if self.completion_time is None or self.start_time is None:
            return None
        return self.completion_time - self.start_time

    @property
    def turnaround(self) -> Optional[float]:
        if self.completion_time is None:
            return None
        return self.completion_time - self.submit_time


@dataclass
class MigrationRecord:
    job_id: str
    time: float
    source: str
    target: str
    state_before: str
    local: PeerQueueReport
    chosen: PeerQueueReport
    delivered_at: Optional[float] = None


@dataclass(frozen=True)
class SiteSample:
    time: float
    site_id: str
    queued: int
    running: int
    busy_slots: int
    inbound: int
    imports: int
    exports: int


@dataclass
class SiteTotals:
    site_id: str
    cpu_count: int
    completed: int = 0
    imports: int = 0
    exports: int = 0
    slot_hours: float = 0.0

    def throughput(self, makespan: float) -> float:
        """Jobs completed per hour."""
        return self.completed / makespan if makespan > 0 else 0.0

    def utilization(self, makespan: float) -> float:
        """Share of the site's slot hours that were occupied, background work included."""
        return self.slot_hours / (self.cpu_count * makespan) if makespan > 0 else 0.0


@dataclass
class Metrics:
    scenario: str
    policy: str
    seed: int
    jobs: Dict[str, JobRecord] = field(default_factory=dict)
    sites: Dict[str, SiteTotals] = field(default_factory=dict)
    samples: List[SiteSample] = field(default_factory=list)
    migrations: List[MigrationRecord] = field(default_factory=list)
    placements: List[GroupPlacement] = field(default_factory=list)
    aggregations: List[AggregatedResult] = field(default_factory=list)
    messages: Dict[str, int] = field(default_factory=dict)
    makespan: float = 0.0

    def finished(self) -> List[JobRecord]:
        return [record for record in self.jobs.values() if record.finished]

    def summary(self) -> Dict[str, float]:
        """One row of headline numbers for the run."""
        done = self.finished()

        def mean(values: List[float]) -> float:
            return float(np.mean(values)) if values else 0.0

        queue_times = [record.queue_time for record in done]
        return {
            "scenario": self.scenario,
            "policy": self.policy,
            "seed": self.seed,
            "jobs": len(self.jobs),
            "completed": len(done),
            "mean_queue_time": mean(queue_times),
            "max_queue_time": max(queue_times, default=0.0),
            "mean_execution_time": mean([record.execution_time for record in done]),
            "mean_turnaround": mean([record.turnaround for record in done]),
            "mean_response_time": mean([record.response_time for record in done]),
            "makespan": self.makespan,
            "migrations": len(self.migrations),
            "imports": sum(site.imports for site in self.sites.values()),
            "exports": sum(site.exports for site in self.sites.values()),
            "messages": sum(self.messages.values()),
        }


def default_window(metrics: Metrics) -> Tuple[float, float]:
    """The middle 80% of the submission period."""
    last = max((record.submit_time for record in metrics.jobs.values()), default=0.0)
    return 0.1 * last, 0.9 * last


def little_terms(
    metrics: Metrics, window: Optional[Tuple[float, float]] = None
) -> LittleCheck:
    """
    Observed queue length, arrival rate and wait over a window.

    The queue length is the time average of jobs waiting to start, the rate
    counts submissions in the window and the wait averages those jobs.

    Raises:
        NotSteadyState: If the window is empty, or completions in it differ from \
            arrivals by more than 5%.
    """
    t0, t1 = window or default_window(metrics)
    if not t1 > t0:
        raise NotSteadyState(f"Window must have a positive length. Got [{t0}, {t1}] instead.")

    records = [record for record in metrics.jobs.values() if record.start_time is not None]
    submits = np.array([record.submit_time for record in records])
    starts = np.array([record.start_time for record in records])
    completions = np.array(
        [
            record.completion_time if record.completion_time is not None else np.inf
            for record in records
        ]
    )

    inside = (submits >= t0) & (submits < t1)
    arrived = int(inside.sum())
    completed = int(((completions >= t0) & (completions < t1)).sum())

    if arrived == 0:
        raise NotSteadyState(f"No arrivals in window [{t0:.4g}, {t1:.4g}].")
    if abs(completed - arrived) > STEADY_TOLERANCE * arrived:
        raise NotSteadyState(
            f"Window [{t0:.4g}, {t1:.4g}] is not steady: {arrived} arrivals, {completed} completions."
        )

    span = t1 - t0
    overlap = np.clip(np.minimum(starts, t1) - np.maximum(submits, t0), 0.0, None)

    return LittleCheck(
        avg_queue_length=float(overlap.sum() / span),
        arrival_rate=arrived / span,
        avg_wait=float(np.mean(starts[inside] - submits[inside])),
    )


def littles_check(metrics: Metrics, window: Optional[Tuple[float, float]] = None) -> float:
    """
    Relative gap between the observed queue length and arrival rate x wait.

    Returns:
        float: ``|N - R x W| / max(N, eps)``.
    """
    terms = little_terms(metrics, window)
    if terms.avg_queue_length < 0:
        raise InvariantError(f"Negative queue length {terms.avg_queue_length}.")

    logger.debug(
        f"Little: N={terms.avg_queue_length:.4g} R={terms.arrival_rate:.4g} "
        f"W={terms.avg_wait:.4g} residual={terms.residual:.3g}"
    )
    return terms.residual
