from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple
from collections import Counter, deque
from enum import IntEnum
import logging

from src.models import (
    CongestionConfig,
    InvariantError,
    Job,
    JobState,
    OutOfRange,
    PriorityContext,
)


__all__ = [
    "QueueLevel",
    "QUEUE_RANGES",
    "MAX_PRIORITY",
    "threshold_N",
    "priority",
    "queue_for",
    "congestion_ratio",
    "RateWindow",
    "detect_congestion",
    "FeedbackQueueSet",
    "FcfsQueue",
]


logger = logging.getLogger(__name__)


class QueueLevel(IntEnum):
    Q1 = 1
    Q2 = 2
    Q3 = 3
    Q4 = 4


# Half-open [low, high) ranges
QUEUE_RANGES: Dict[QueueLevel, Tuple[float, float]] = {
    QueueLevel.Q1: (0.5, 1.0),
    QueueLevel.Q2: (0.0, 0.5),
    QueueLevel.Q3: (-0.5, 0.0),
    QueueLevel.Q4: (-1.0, -0.5),
}

# Highest priority a boosted or aged job may reach
MAX_PRIORITY = 1.0 - 1e-9


def threshold_N(ctx: PriorityContext) -> float:
    """N = (q x T) / (Q x t)."""
    return ctx.threshold


def priority(n: int, N: float) -> float:
    """
    Priority of a user's n-th queued job against the threshold N.

    Args:
        n (int): The owner's jobs in all queues (>= 1).
        N (float): The job's threshold (> 0).

    Returns:
        float: ``(N - n) / N`` when ``n <= N``, else ``(N - n) / n``. Always in (-1, 1).
    """
    if n < 1:
        raise InvariantError(f"'n' must be >= 1. Got {n} instead.")
    if not N > 0:
        raise InvariantError(f"'N' must be > 0. Got {N} instead.")

    if n <= N:
        return (N - n) / N
    return (N - n) / n


def queue_for(value: float) -> QueueLevel:
    """
    The queue whose range holds a priority.

    Raises:
        OutOfRange: If the priority is outside [-1, 1).
    """
    for level, (low, high) in QUEUE_RANGES.items():
        if low <= value < high:
            return level
    raise OutOfRange(f"Priority must lie in [-1, 1). Got {value} instead.")


def congestion_ratio(arrivals: float, services: float) -> float:
    """(Arrival - Service) / Arrival. Arrival must be positive."""
    if not arrivals > 0:
        raise InvariantError(f"'arrivals' must be > 0. Got {arrivals} instead.")
    return (arrivals - services) / arrivals


class RateWindow:
    def __init__(self, window_length: int = 100) -> None:
        """
        Sliding record of the most recent arrivals and service completions at a site.

        Args:
            window_length (int, optional): Events kept of each kind. Defaults to 100.
        """
        if window_length < 1:
            raise InvariantError(
                f"'window_length' must be >= 1. Got {window_length} instead."
            )
        self.window_length = window_length
        self.arrivals = deque(maxlen=window_length)
        self.completions = deque(maxlen=window_length)

    def record_arrival(self, now: float) -> None:
        self.arrivals.append(now)

    def record_completion(self, now: float) -> None:
        self.completions.append(now)

    def _span(self, now: float) -> Tuple[float, int, int]:
        if not self.arrivals:
            return 0.0, 0, 0
        start = self.arrivals[0]
        served = sum(1 for stamp in self.completions if stamp >= start)
        return now - start, len(self.arrivals), served

    def arrival_rate(self, now: float) -> float:
        """Arrivals per hour since the oldest arrival in the window."""
        span, arrived, _ = self._span(now)
        return arrived / span if span > 0 else float(arrived)

    def service_rate(self, now: float) -> float:
        """Completions per hour over the same span as ``arrival_rate``."""
        span, _, served = self._span(now)
        return served / span if span > 0 else float(served)

    def ratio(self, now: float) -> Optional[float]:
        """Congestion ratio, or None with no arrival on record."""
        _, arrived, served = self._span(now)
        if arrived == 0:
            return None
        return congestion_ratio(arrived, served)


def detect_congestion(
    window: RateWindow, cfg: CongestionConfig, now: Optional[float] = None
) -> bool:
    """
    Whether arrivals outrun service by more than the threshold.

    Args:
        window (RateWindow): Recent arrivals and completions of a site.
        cfg (CongestionConfig): Holds ``thrs``.
        now (float, optional): Current time. Defaults to the latest recorded event.

    Returns:
        bool: True iff ``(arrival - service) / arrival > thrs``. False with no arrivals.
    """
    if now is None:
        stamps = list(window.arrivals) + list(window.completions)
        now = max(stamps) if stamps else 0.0

    ratio = window.ratio(now)
    return ratio is not None and ratio > cfg.thrs


class FeedbackQueueSet:
    def __init__(self, quotas: Mapping[str, float], aging_coefficient: float = 0.0) -> None:
        """
        The four priority ranged queues of one site, reprioritized on every arrival.

        Args:
            quotas (Mapping[str, float]): User id to quota q.
            aging_coefficient (float, optional): Priority gained per hour of waiting. \
                0 disables aging. Defaults to 0.0.
        """
        if aging_coefficient < 0:
            raise InvariantError(
                f"'aging_coefficient' must be >= 0. Got {aging_coefficient} instead."
            )
        self.quotas = dict(quotas)
        self.aging_coefficient = float(aging_coefficient)
        self.queues: Dict[QueueLevel, List[Job]] = {level: [] for level in QueueLevel}
        self._level: Dict[str, QueueLevel] = {}
        self._sequence: Dict[str, int] = {}
        self._boost: Dict[str, float] = {}
        self._counter = 0

    def __len__(self) -> int:
        return len(self._level)

    def __contains__(self, job: Job) -> bool:
        return job.id in self._level

    def jobs(self) -> Iterator[Job]:
        """Queued jobs in dequeue order."""
        for level in QueueLevel:
            yield from self.queues[level]

    def queue_of(self, job: Job) -> Optional[QueueLevel]:
        return self._level.get(job.id)

    def _quota(self, owner: str) -> float:
        if owner not in self.quotas:
            raise InvariantError(f"User {owner} has no quota.")
        return self.quotas[owner]

    def contexts(self) -> Dict[str, PriorityContext]:
        """Priority context of every queued job at the current instant."""
        queued = list(self.jobs())
        owners = Counter(job.owner for job in queued)
        total_processors = sum(job.processors_required for job in queued)
        quota_sum = sum(self._quota(owner) for owner in owners)

        return {
            job.id: PriorityContext(
                n=owners[job.owner],
                t=job.processors_required,
                total_processors=total_processors,
                quota=self._quota(job.owner),
                quota_sum=quota_sum,
                total_jobs=len(queued),
            )
            for job in queued
        }

    def _order(self, job: Job) -> Tuple[float, float, int]:
        return (-job.priority, job.enqueue_timestamp, self._sequence[job.id])

    def reprioritize(self, now: float) -> None:
        """
        Recompute every queued job's priority and move it to the matching queue.

        Every job uses the current T and Q with its own t, its owner's n and q.
        Each sweep starts from that fresh value and adds the job's migration
        boost once plus ``aging_coefficient`` times the hours it has waited.
        The boost never compounds across sweeps, and the sum is clamped at
        ``MAX_PRIORITY``.

        Args:
            now (float): Current time, used by the optional aging bonus.
        """
        queued = list(self.jobs())
        owners = Counter(job.owner for job in queued)
        total_processors = sum(job.processors_required for job in queued)
        quota_sum = sum(self._quota(owner) for owner in owners)

        self.queues = {level: [] for level in QueueLevel}
        for job in queued:
            N = (self._quota(job.owner) * total_processors) / (
                quota_sum * job.processors_required
            )
            value = priority(owners[job.owner], N) + self._boost.get(job.id, 0.0)
            if self.aging_coefficient:
                value += self.aging_coefficient * max(0.0, now - job.enqueue_timestamp)
            job.set_priority(min(value, MAX_PRIORITY))

            level = queue_for(job.priority)
            self._level[job.id] = level
            self.queues[level].append(job)

        for queue in self.queues.values():
            queue.sort(key=self._order)

    def _admit(self, job: Job, now: float, boost: float) -> None:
        if job.id in self._level:
            raise InvariantError(f"Job {job.id} is already queued.")
        if job.state not in (JobState.SUBMITTED, JobState.MIGRATED):
            raise InvariantError(
                f"Job {job.id}: only submitted or migrated jobs can be queued. Got {job.state.value} instead."
            )

        job.transition(JobState.QUEUED)
        job.enqueue_timestamp = now
        self._sequence[job.id] = self._counter
        self._counter += 1
        if boost:
            self._boost[job.id] = boost

        # Placeholder until the sweep assigns the real value
        job.priority = 0.0
        self._level[job.id] = QueueLevel.Q2
        self.queues[QueueLevel.Q2].append(job)

    def submit(self, job: Job, now: float, boost: float = 0.0) -> float:
        """
        Queue a job and reprioritize every queued job.

        Args:
            job (Job): A submitted or in-flight migrated job.
            now (float): Arrival time, becomes the enqueue timestamp.
            boost (float, optional): Added to the job's priority at every sweep. Defaults to 0.0.

        Returns:
            float: The job's priority after the sweep.
        """
        self._admit(job, now, boost)
        self.reprioritize(now)
        return job.priority

    def submit_batch(self, jobs: Sequence[Job], now: float) -> List[float]:
        """
        Queue a burst shortest job first (fewest processors), keeping submission order on ties.

        A sweep depends only on the queued set, so one sweep after the whole
        burst gives the same state as one sweep per job.

        Returns:
            List[float]: Final priorities, in the order the jobs were given.
        """
        for job in sorted(jobs, key=lambda job: job.processors_required):
            self._admit(job, now, 0.0)
        if jobs:
            self.reprioritize(now)
        return [job.priority for job in jobs]

    def peek_next(self) -> Optional[Job]:
        for level in QueueLevel:
            if self.queues[level]:
                return self.queues[level][0]
        return None

    def head(self) -> Optional[Tuple[QueueLevel, Job]]:
        """The next job to run and the queue it sits in."""
        for level in QueueLevel:
            if self.queues[level]:
                return level, self.queues[level][0]
        return None

    def dequeue_next(self) -> Optional[Job]:
        """Remove the head of the highest non-empty queue. No reprioritization."""
        for level in QueueLevel:
            if self.queues[level]:
                job = self.queues[level].pop(0)
                self._forget(job)
                return job
        return None

    def remove(self, job: Job) -> None:
        """Take a job out of its queue without touching the others."""
        level = self.queue_of(job)
        if level is None:
            raise InvariantError(f"Job {job.id} is not queued here.")
        self.queues[level] = [other for other in self.queues[level] if other.id != job.id]
        self._forget(job)

    def _forget(self, job: Job) -> None:
        self._level.pop(job.id, None)
        self._sequence.pop(job.id, None)
        self._boost.pop(job.id, None)

    def congestion_victims(self) -> List[Job]:
        """Q4 then Q3 jobs, lowest priority first."""
        return list(reversed(self.queues[QueueLevel.Q4])) + list(
            reversed(self.queues[QueueLevel.Q3])
        )

    def misplaced(self) -> List[Job]:
        """Jobs whose priority is outside their queue's range or out of order."""
        bad = []
        for level, queue in self.queues.items():
            low, high = QUEUE_RANGES[level]
            bad.extend(job for job in queue if not low <= job.priority < high)
            bad.extend(
                later
                for earlier, later in zip(queue, queue[1:])
                if self._order(earlier) > self._order(later)
            )
        return bad


class FcfsQueue:
    """Single first come first served queue, every job at priority 0."""

    def __init__(self) -> None:
        self.queue: deque = deque()

    def __len__(self) -> int:
        return len(self.queue)

    def __contains__(self, job: Job) -> bool:
        return any(other.id == job.id for other in self.queue)

    def jobs(self) -> Iterator[Job]:
        yield from self.queue

    def queue_of(self, job: Job) -> Optional[QueueLevel]:
        return QueueLevel.Q2 if job in self else None

    def reprioritize(self, now: float) -> None:
        pass

    def submit(self, job: Job, now: float, boost: float = 0.0) -> float:
        job.transition(JobState.QUEUED)
        job.enqueue_timestamp = now
        job.set_priority(0.0)
        self.queue.append(job)
        return job.priority

    def submit_batch(self, jobs: Sequence[Job], now: float) -> List[float]:
        return [self.submit(job, now) for job in jobs]

    def peek_next(self) -> Optional[Job]:
        return self.queue[0] if self.queue else None

    def head(self) -> Optional[Tuple[QueueLevel, Job]]:
        return (QueueLevel.Q2, self.queue[0]) if self.queue else None

    def dequeue_next(self) -> Optional[Job]:
        return self.queue.popleft() if self.queue else None

    def remove(self, job: Job) -> None:
        self.queue = deque(other for other in self.queue if other.id != job.id)

    def congestion_victims(self) -> List[Job]:
        return []

    def misplaced(self) -> List[Job]:
        return []
