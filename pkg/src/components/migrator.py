from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union
import logging

from src.models import AlreadyMigrated, InvariantError, Job, JobRunning, JobState

from .queue_manager import FcfsQueue, FeedbackQueueSet


__all__ = [
    "DEFAULT_BOOST",
    "PeerQueueReport",
    "jobs_ahead",
    "select_target",
    "release",
    "admit",
    "migrate",
]


logger = logging.getLogger(__name__)

# One queue band
DEFAULT_BOOST = 0.25

Queues = Union[FeedbackQueueSet, FcfsQueue]


@dataclass(frozen=True)
class PeerQueueReport:
    """What a site answers when asked how a job would fare in its queues."""

    site_id: str
    queue_length: int
    jobs_ahead: int
    total_cost: float
    alive: bool = True

    def __post_init__(self) -> None:
        if not 0 <= self.jobs_ahead <= self.queue_length:
            raise InvariantError(
                f"Site {self.site_id}: 'jobs_ahead' must lie in [0, {self.queue_length}]. "
                f"Got {self.jobs_ahead} instead."
            )


def jobs_ahead(queues: Union[Queues, Iterable[Job]], candidate_priority: float) -> int:
    """Queued jobs with a priority strictly above the candidate's."""
    jobs = queues.jobs() if hasattr(queues, "jobs") else queues
    return sum(1 for job in jobs if job.priority > candidate_priority)


def select_target(
    local: PeerQueueReport, peers: Sequence[PeerQueueReport]
) -> Optional[str]:
    """
    Choose where a waiting job should go, if anywhere.

    Args:
        local (PeerQueueReport): The job's standing at its current site.
        peers (Sequence[PeerQueueReport]): Reports from peer sites.

    Returns:
        str | None: The best alive peer by (jobs ahead, total cost, id), only when it \
            beats the local site on both jobs ahead and total cost. None keeps the job local.
    """
    alive = [peer for peer in peers if peer.alive and peer.site_id != local.site_id]
    if not alive:
        return None

    best = min(alive, key=lambda peer: (peer.jobs_ahead, peer.total_cost, peer.site_id))

    if best.jobs_ahead < local.jobs_ahead and best.total_cost < local.total_cost:
        return best.site_id
    return None


def release(job: Job, source: Queues) -> Job:
    """
    Take a queued job out of its site so it can travel.

    Raises:
        AlreadyMigrated: If the job moved once already.
        JobRunning: If the job has started.
    """
    if job.migrated_flag:
        raise AlreadyMigrated(f"Job {job.id} has already been migrated once.")
    if job.state is JobState.RUNNING:
        raise JobRunning(f"Job {job.id} is running and cannot be migrated.")
    if job.state is not JobState.QUEUED:
        raise InvariantError(
            f"Job {job.id}: only queued jobs can be migrated. Got {job.state.value} instead."
        )

    source.remove(job)
    job.mark_migrated()
    job.transition(JobState.MIGRATED)
    return job


def admit(
    job: Job, destination: Queues, now: float, target: Optional[str] = None,
    boost: float = DEFAULT_BOOST,
) -> Job:
    """
    Queue an arriving migrated job at its new site, one band higher than it would otherwise sit.

    Args:
        job (Job): A released job.
        destination (Queues): Queues of the receiving site.
        now (float): Arrival time at the destination.
        target (str, optional): Receiving site id, recorded on the job.
        boost (float, optional): Priority bonus, kept below 1. Defaults to 0.25.

    Returns:
        Job: The queued job.
    """
    if job.state is not JobState.MIGRATED:
        raise InvariantError(
            f"Job {job.id}: only released jobs can be admitted. Got {job.state.value} instead."
        )
    if target is not None:
        job.current_site = target
    destination.submit(job, now, boost=boost)
    return job


def migrate(
    job: Job, source: Queues, destination: Queues, target: str, now: float,
    boost: float = DEFAULT_BOOST,
) -> Job:
    """Release from ``source`` and admit into ``destination`` at the same instant."""
    release(job, source)
    logger.debug(f"Job {job.id}: {job.current_site} -> {target}")
    return admit(job, destination, now, target, boost)
