from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
from collections import Counter, defaultdict
from enum import Enum
import bisect
import heapq
import itertools
import logging

from src.models import (
    CapacityExceeded,
    InvariantError,
    Job,
    JobState,
    NoAliveSite,
    Scenario,
    SiteSpec,
    SiteState,
)

from .bulk_scheduler import (
    GroupPlacement,
    SubgroupResult,
    aggregate,
    plan_jobs,
    schedule_group,
)
from .cost_model import computation_cost, placement_cost, stage_in_hours
from .metrics import JobRecord, Metrics, MigrationRecord, SiteSample, SiteTotals
from .migrator import PeerQueueReport, admit, release, select_target
from .overlay import MessageKind, Overlay
from .queue_manager import FcfsQueue, FeedbackQueueSet, RateWindow, detect_congestion
from .site_selector import classify, reference_edge, select_site
from .workload import Arrival, materialize, replay


__all__ = ["EventKind", "SimEvent", "Policy", "SiteRuntime", "Simulation", "run", "compare"]


logger = logging.getLogger(__name__)


class EventKind(Enum):
    JOB_ARRIVAL = "job_arrival"
    GROUP_ARRIVAL = "group_arrival"
    JOB_STAGED = "job_staged"
    JOB_START = "job_start"
    JOB_COMPLETE = "job_complete"
    MIGRATION_DECISION = "migration_decision"
    HEARTBEAT = "heartbeat"
    NODE_CRASH = "node_crash"
    MESSAGE_DELIVERY = "message_delivery"


@dataclass(order=True)
class SimEvent:
    time: float
    sequence: int
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)


class Policy(Enum):
    DIANA = "diana"
    GREEDY = "greedy"
    FCFS = "fcfs"

    @classmethod
    def parse(cls, value: Union[str, "Policy"]) -> "Policy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvariantError(
                f"Policy options: {[policy.value for policy in cls]}. Got {value} instead."
            ) from None


Queues = Union[FeedbackQueueSet, FcfsQueue]


class SiteRuntime:
    def __init__(self, spec: SiteSpec, queues: Queues, window_length: int = 100) -> None:
        """
        Mutable state of one site during a run.

        Args:
            spec (SiteSpec): The site as declared.
            queues (Queues): Its waiting jobs.
            window_length (int, optional): Events kept for congestion detection. Defaults to 100.
        """
        self.spec = spec
        self.id = spec.id
        self.queues = queues
        self.reserved = spec.reserved
        self.busy = 0
        self.running: Dict[str, Job] = {}
        self.inbound: Dict[str, Job] = {}
        self.window = RateWindow(window_length)
        self.user_jobs: Counter = Counter()
        self.totals = SiteTotals(spec.id, spec.cpu_count)
        self.dispatch_pending = False
        self.tick_pending = False
        self._last_change = 0.0

    @property
    def capacity(self) -> int:
        """Slots left for grid jobs."""
        return self.spec.cpu_count - self.reserved

    @property
    def free(self) -> int:
        return self.capacity - self.busy

    def fits(self, job: Job) -> bool:
        return job.processors_required <= self.capacity

    def room(self, owner: str) -> Optional[int]:
        """Jobs ``owner`` may still place here. None is unlimited."""
        if self.spec.max_jobs_per_user is None:
            return None
        return max(0, self.spec.max_jobs_per_user - self.user_jobs[owner])

    def state(self, alive: bool = True) -> SiteState:
        return SiteState(
            id=self.id,
            cpu_count=self.spec.cpu_count,
            compute_capability=self.spec.compute_capability,
            waiting_queue_length=len(self.queues) + len(self.inbound),
            site_load=(self.reserved + self.busy) / self.spec.cpu_count,
            alive=alive,
            hosted_datasets=frozenset(self.spec.datasets),
        )

    def occupy(self, now: float, slots: int) -> None:
        """Take (or give back, when negative) slots and integrate the busy area."""
        self.totals.slot_hours += (self.reserved + self.busy) * (now - self._last_change)
        self._last_change = now
        self.busy += slots

    def sample(self, now: float) -> SiteSample:
        return SiteSample(
            time=now,
            site_id=self.id,
            queued=len(self.queues),
            running=len(self.running),
            busy_slots=self.reserved + self.busy,
            inbound=len(self.inbound),
            imports=self.totals.imports,
            exports=self.totals.exports,
        )


@dataclass
class _GroupProgress:
    placement: GroupPlacement
    # subgroup index -> (sites, job ids)
    subgroups: Dict[int, Tuple[List[str], List[str]]] = field(default_factory=dict)
    outputs: Dict[int, Dict[str, float]] = field(default_factory=lambda: defaultdict(dict))


class Simulation:
    def __init__(
        self,
        scenario: Scenario,
        policy: Union[str, Policy] = Policy.DIANA,
        seed: int = 0,
        trace: Optional[List[Arrival]] = None,
        check_invariants: bool = False,
    ) -> None:
        """
        One deterministic run of a scenario under a policy.

        Args:
            scenario (Scenario): Validated scenario.
            policy (str | Policy, optional): diana, greedy or fcfs. Defaults to diana.
            seed (int, optional): Workload seed. Defaults to 0.
            trace (List[Arrival], optional): A materialized trace to replay. Defaults to drawing one from the seed.
            check_invariants (bool, optional): Check capacity, conservation and queue ranges \
                after every event. Defaults to False.
        """
        self.scenario = scenario
        self.config = scenario.config
        self.policy = Policy.parse(policy)
        self.seed = int(seed)
        self.trace = replay(trace) if trace is not None else materialize(scenario, self.seed)
        self.check_invariants = bool(check_invariants)

        self.edges = scenario.edges
        self.reference = reference_edge(self.edges)
        self.now = 0.0
        self.events: List[SimEvent] = []
        self._sequence = itertools.count()

        self.sites: Dict[str, SiteRuntime] = {
            spec.id: SiteRuntime(spec, self._queues(), self.config.congestion.window_length)
            for spec in scenario.sites
        }
        self.overlay = Overlay(self.edges, subgrid_min=self.config.overlay.subgrid_min)
        self.reachable: Dict[str, bool] = {}

        self.metrics = Metrics(scenario.name, self.policy.value, self.seed)
        for site in self.sites.values():
            self.metrics.sites[site.id] = site.totals

        self.job_class: Dict[str, Any] = {}
        self.held: List[Job] = []
        self.started: set = set()
        self.in_flight: Dict[str, MigrationRecord] = {}
        self.groups: Dict[str, _GroupProgress] = {}
        self.group_of: Dict[str, Tuple[str, int]] = {}
        self.submitted = 0
        self.completed = 0
        self._touched: Dict[str, SiteRuntime] = {}
        self._last_sample: Dict[str, int] = {}

    def __repr__(self) -> str:
        return f"Simulation({self.scenario.name}, policy={self.policy.value}, seed={self.seed})"

    # ------------------------------------------------------------------ setup

    def _queues(self) -> Queues:
        if self.policy is Policy.DIANA:
            return FeedbackQueueSet(self.scenario.quotas, self.config.aging.coefficient)
        return FcfsQueue()

    @property
    def _migrating(self) -> bool:
        return self.policy is Policy.DIANA and self.config.migration.enabled

    def _build_overlay(self) -> None:
        for spec in self.scenario.sites:
            for _ in range(spec.nodes):
                self.overlay.join(spec.id, availability=spec.availability, resources=spec.cpu_count)
                self.overlay.settle()
        self._refresh()

    def _refresh(self) -> None:
        self.reachable = {site_id: self.overlay.site_reachable(site_id) for site_id in self.sites}

    def _push(self, time: float, kind: EventKind, payload: Any = None) -> None:
        heapq.heappush(self.events, SimEvent(time, next(self._sequence), kind, payload))

    # -------------------------------------------------------------------- run

    def run(self) -> Metrics:
        """
        Process every event and return the run's metrics.

        Raises:
            NoAliveSite: If some job never found a site to run on.
        """
        self._build_overlay()

        for arrival in self.trace:
            kind = (
                EventKind.GROUP_ARRIVAL
                if arrival.group is not None and self.policy is Policy.DIANA
                else EventKind.JOB_ARRIVAL
            )
            self._push(arrival.time, kind, arrival)
        for crash in sorted(self.scenario.crashes, key=lambda c: (c.time, c.node)):
            self._push(crash.time, EventKind.NODE_CRASH, crash.node)

        while self.events:
            event = heapq.heappop(self.events)
            self.now = event.time
            self._handle(event)
            self._flush_samples()
            if self.check_invariants:
                self._check()

        if self.held:
            raise NoAliveSite(
                f"{len(self.held)} jobs never found an alive site, "
                f"first {[job.id for job in self.held[:5]]}."
            )

        return self._finish()

    def _handle(self, event: SimEvent) -> None:
        match event.kind:
            case EventKind.JOB_ARRIVAL:
                self._on_arrival(event.payload)
            case EventKind.GROUP_ARRIVAL:
                self._on_group(event.payload)
            case EventKind.JOB_STAGED:
                job, site_id = event.payload
                self._enqueue(self.sites[site_id], [job], burst=False)
            case EventKind.JOB_START:
                self._dispatch(self.sites[event.payload])
            case EventKind.JOB_COMPLETE:
                self._on_complete(*event.payload)
            case EventKind.MIGRATION_DECISION:
                self._on_decision(*event.payload)
            case EventKind.MESSAGE_DELIVERY:
                self._on_delivery(*event.payload)
            case EventKind.NODE_CRASH:
                self._on_crash(event.payload)
            case EventKind.HEARTBEAT:
                self._on_heartbeat(event.payload)

    def _finish(self) -> Metrics:
        makespan = max(
            (record.completion_time for record in self.metrics.finished()), default=0.0
        )
        for site in self.sites.values():
            site.occupy(makespan, 0)

        self.metrics.makespan = makespan
        self.metrics.messages = {
            kind.value: self.overlay.counts[kind]
            for kind in MessageKind
            if self.overlay.counts[kind]
        }
        logger.info(
            f"[bold]{self.scenario.name}[/] {self.policy.value} seed {self.seed}: "
            f"{self.completed} jobs, makespan {makespan:.4g}h, "
            f"{len(self.metrics.migrations)} migrations"
        )
        return self.metrics

    # -------------------------------------------------------------- placement

    def _register(self, job: Job, site_id: str) -> None:
        job.origin_site = site_id
        job.current_site = site_id
        job_class = classify(job, self.reference, self.config.classifier)
        self.job_class[job.id] = job_class
        self.submitted += 1
        self.metrics.jobs[job.id] = JobRecord(
            job_id=job.id,
            owner=job.owner,
            group_id=job.group_id,
            origin_site=site_id,
            site=site_id,
            job_class=job_class.value,
            processors=job.processors_required,
            service_time=job.service_time,
            submit_time=self.now,
        )

    def _eligible(self, site: SiteRuntime, job: Job) -> bool:
        room = site.room(job.owner)
        return self.reachable[site.id] and site.fits(job) and (room is None or room > 0)

    def _states(self) -> List[SiteState]:
        return [site.state() for site in self.sites.values() if self.reachable[site.id]]

    def _choose(self, job: Job) -> Optional[str]:
        """Site a new job goes to under the run's policy, or None to hold it."""
        if self.policy is Policy.FCFS:
            origin = self.sites[job.origin_site]
            if not origin.fits(job):
                raise CapacityExceeded(
                    f"Job {job.id} needs {job.processors_required} CPUs, "
                    f"site {origin.id} has {origin.capacity}."
                )
            room = origin.room(job.owner)
            return origin.id if room is None or room > 0 else None

        candidates = [site for site in self.sites.values() if self._eligible(site, job)]
        if not candidates:
            return None

        if self.policy is Policy.GREEDY:
            return min(
                candidates,
                key=lambda site: (computation_cost(site.state(), self.config.weights), site.id),
            ).id

        return select_site(
            job,
            [site.state() for site in candidates],
            self.edges,
            self.config.weights,
            job_class=self.job_class[job.id],
            origin=job.current_site,
            normalize=self.config.normalize_costs,
        )

    def _stage_in(self, job: Job, site: SiteRuntime, origin: str, states: Sequence[SiteState]) -> float:
        if not self.config.transfer_delay:
            return 0.0
        return stage_in_hours(job, site.state(), self.edges, origin, states)

    def _send(self, job: Job, site_id: str, states: Sequence[SiteState]) -> bool:
        """Start moving a job to a site. True when it can be queued right away."""
        site = self.sites[site_id]
        delay = self._stage_in(job, site, job.current_site, states)

        job.current_site = site_id
        site.inbound[job.id] = job
        site.user_jobs[job.owner] += 1
        self.metrics.jobs[job.id].site = site_id
        self._touch(site)

        if delay > 0:
            self._push(self.now + delay, EventKind.JOB_STAGED, (job, site_id))
            return False
        return True

    def _place_all(self, jobs: Sequence[Job], burst: bool) -> None:
        states = self._states()
        ready: Dict[str, List[Job]] = defaultdict(list)

        for job in jobs:
            site_id = self._choose(job)
            if site_id is None:
                self.held.append(job)
                continue
            if self._send(job, site_id, states):
                ready[site_id].append(job)

        for site_id, batch in ready.items():
            self._enqueue(self.sites[site_id], batch, burst)

    def _retry_held(self) -> None:
        if self.held:
            jobs, self.held = self.held, []
            self._place_all(jobs, burst=False)

    def _on_arrival(self, arrival: Arrival) -> None:
        for job in arrival.jobs:
            self._register(job, arrival.site)
        self._place_all(arrival.jobs, arrival.burst)

    def _on_group(self, arrival: Arrival) -> None:
        group = arrival.group
        for job in group.jobs:
            self._register(job, arrival.site)

        candidates = [site for site in self.sites.values() if self.reachable[site.id]]
        bulk = self.config.bulk
        try:
            placement = schedule_group(
                group,
                [site.state() for site in candidates],
                self.edges,
                self.config.weights,
                subgroup_size=bulk.subgroup_size,
                division_factor=bulk.division_factor,
                classifier=self.config.classifier,
                normalize=self.config.normalize_costs,
                origin=arrival.site,
                destination=arrival.destination,
                allowance={site.id: site.room(group.owner) for site in candidates},
            )
        except (NoAliveSite, CapacityExceeded) as error:
            logger.warning(f"[yellow][WARNING][/] Group {group.id} placed job by job: {error}")
            self._place_all(group.jobs, burst=True)
            return

        self.metrics.placements.append(placement)
        progress = _GroupProgress(placement)
        self.groups[group.id] = progress

        states = self._states()
        ready: Dict[str, List[Job]] = defaultdict(list)
        for index, site_id, jobs in plan_jobs(group, placement):
            site_ids, job_ids = progress.subgroups.setdefault(index, ([], []))
            if site_id not in site_ids:
                site_ids.append(site_id)
            job_ids.extend(job.id for job in jobs)
            for job in jobs:
                self.group_of[job.id] = (group.id, index)
                if self._send(job, site_id, states):
                    ready[site_id].append(job)

        for site_id, batch in ready.items():
            self._enqueue(self.sites[site_id], batch, burst=True)

    # -------------------------------------------------------------- queueing

    def _enqueue(self, site: SiteRuntime, jobs: List[Job], burst: bool) -> None:
        for job in jobs:
            site.inbound.pop(job.id, None)

        if burst and len(jobs) > 1:
            priorities = site.queues.submit_batch(jobs, self.now)
        else:
            priorities = [site.queues.submit(job, self.now) for job in jobs]

        for job, value in zip(jobs, priorities):
            self.metrics.jobs[job.id].priority_at_submit = value
            site.window.record_arrival(self.now)

        self._after_arrival(site)

    def _after_arrival(self, site: SiteRuntime) -> None:
        self._touch(site)
        if not site.dispatch_pending:
            site.dispatch_pending = True
            self._push(self.now, EventKind.JOB_START, site.id)
        if self._migrating:
            self._push(self.now, EventKind.MIGRATION_DECISION, (site.id, False))

    def _dispatch(self, site: SiteRuntime) -> None:
        """Start queue heads, in order, while the head fits the free slots."""
        site.dispatch_pending = False

        while (head := site.queues.head()) is not None:
            level, job = head
            if job.processors_required > site.free:
                break

            site.queues.dequeue_next()
            if job.id in self.started:
                raise InvariantError(f"Job {job.id} started twice.")
            self.started.add(job.id)

            job.transition(JobState.RUNNING)
            site.occupy(self.now, job.processors_required)
            site.running[job.id] = job

            record = self.metrics.jobs[job.id]
            record.start_time = self.now
            record.priority_at_start = job.priority
            record.queue_at_start = int(level)
            self._push(self.now + job.service_time, EventKind.JOB_COMPLETE, (job, site.id))

        self._touch(site)

    def _on_complete(self, job: Job, site_id: str) -> None:
        site = self.sites[site_id]
        site.running.pop(job.id)
        site.occupy(self.now, -job.processors_required)
        job.transition(JobState.COMPLETED)
        site.window.record_completion(self.now)
        site.totals.completed += 1
        site.user_jobs[job.owner] -= 1
        self.metrics.jobs[job.id].completion_time = self.now
        self.completed += 1

        self._progress(job, site_id)

        if not site.dispatch_pending and len(site.queues):
            site.dispatch_pending = True
            self._push(self.now, EventKind.JOB_START, site.id)
        self._touch(site)
        self._retry_held()

    def _progress(self, job: Job, site_id: str) -> None:
        """Collect a finished group job; aggregate once every subgroup is done."""
        if job.id not in self.group_of:
            return
        group_id, index = self.group_of.pop(job.id)
        progress = self.groups[group_id]
        progress.outputs[index][job.id] = job.output_size

        if any(
            len(progress.outputs[i]) < len(job_ids)
            for i, (_, job_ids) in progress.subgroups.items()
        ):
            return

        results = [
            SubgroupResult(
                group_id=group_id,
                subgroup_index=i,
                site_ids=tuple(site_ids),
                job_ids=tuple(job_ids),
                outputs=tuple((job_id, progress.outputs[i][job_id]) for job_id in job_ids),
            )
            for i, (site_ids, job_ids) in sorted(progress.subgroups.items())
        ]
        self.metrics.aggregations.append(
            aggregate(
                results,
                progress.placement.aggregation_destination,
                expected={group_id: len(progress.subgroups)},
            )
        )
        del self.groups[group_id]
        logger.debug(f"Group {group_id} aggregated at {progress.placement.aggregation_destination}")

    # -------------------------------------------------------------- migration

    def _on_decision(self, site_id: str, periodic: bool) -> None:
        site = self.sites[site_id]
        if periodic:
            site.tick_pending = False
        if not self._migrating:
            return

        self._migrate_from(site)

        if len(site.queues) and not site.tick_pending:
            site.tick_pending = True
            self._push(
                self.now + self.config.migration.interval,
                EventKind.MIGRATION_DECISION,
                (site.id, True),
            )

    def _candidates(self, site: SiteRuntime) -> List[Job]:
        """Congestion victims first, then jobs with at least ``cpu_count`` jobs ahead."""
        limit = self.config.migration.max_candidates
        chosen: Dict[str, Job] = {}

        def add(job: Job) -> None:
            if len(chosen) < limit and not job.migrated_flag:
                chosen.setdefault(job.id, job)

        if detect_congestion(site.window, self.config.congestion, self.now):
            for job in site.queues.congestion_victims():
                add(job)

        queued = list(site.queues.jobs())
        priorities = sorted(job.priority for job in queued)
        for job in reversed(queued):
            if len(chosen) >= limit:
                break
            ahead = len(priorities) - bisect.bisect_right(priorities, job.priority)
            if ahead < site.spec.cpu_count:
                break
            add(job)

        return list(chosen.values())

    def _migrate_from(self, site: SiteRuntime) -> int:
        if not self.reachable[site.id] or not len(site.queues):
            return 0

        candidates = self._candidates(site)
        if not candidates:
            return 0

        peers = [
            self.sites[peer_id]
            for peer_id in self.overlay.query_peers(site.id)
            if self.reachable.get(peer_id)
        ]
        if not peers:
            return 0

        root = self.overlay.root_of_site(site.id)
        books: Dict[str, List[float]] = {}
        for peer in peers:
            peer_root = self.overlay.root_of_site(peer.id)
            self.overlay.record(MessageKind.QUEUE_REPORT_REQUEST, root, peer_root, peer.id)
            self.overlay.record(MessageKind.QUEUE_REPORT_RESPONSE, peer_root, root, peer.id)
            books[peer.id] = sorted(job.priority for job in peer.queues.jobs())

        local_book = sorted(job.priority for job in site.queues.jobs())
        states = self._states()
        weights = self.config.weights
        moved = 0

        for job in candidates:
            if moved >= self.config.migration.max_exports:
                break
            if job.migrated_flag or job.state is not JobState.QUEUED:
                continue

            local = PeerQueueReport(
                site.id,
                len(local_book),
                len(local_book) - bisect.bisect_right(local_book, job.priority),
                computation_cost(site.state(), weights),
            )
            reports = {}
            for peer in peers:
                room = peer.room(job.owner)
                if not peer.fits(job) or room == 0:
                    continue
                book = books[peer.id]
                reports[peer.id] = PeerQueueReport(
                    peer.id,
                    len(book),
                    len(book) - bisect.bisect_right(book, job.priority),
                    placement_cost(job, peer.state(), self.edges, weights, site.id, states).total_cost,
                )

            target = select_target(local, list(reports.values()))
            if target is None:
                continue

            self._export(job, site, self.sites[target], local, reports[target], states)
            local_book.remove(job.priority)
            bisect.insort(books[target], job.priority)
            moved += 1

        return moved

    def _export(
        self,
        job: Job,
        source: SiteRuntime,
        target: SiteRuntime,
        local: PeerQueueReport,
        chosen: PeerQueueReport,
        states: Sequence[SiteState],
    ) -> None:
        state_before = job.state.value
        release(job, source.queues)
        source.totals.exports += 1
        source.user_jobs[job.owner] -= 1

        target.inbound[job.id] = job
        target.user_jobs[job.owner] += 1

        transit = self.config.message_latency + self._stage_in(job, target, source.id, states)
        self.overlay.record(
            MessageKind.MIGRATE_JOB,
            self.overlay.root_of_site(source.id),
            self.overlay.root_of_site(target.id),
            job.id,
        )

        record = MigrationRecord(
            job_id=job.id,
            time=self.now,
            source=source.id,
            target=target.id,
            state_before=state_before,
            local=local,
            chosen=chosen,
        )
        self.metrics.migrations.append(record)
        self.in_flight[job.id] = record
        self.metrics.jobs[job.id].migrated = True

        self._push(self.now + transit, EventKind.MESSAGE_DELIVERY, (job, target.id))
        self._touch(source)
        self._touch(target)
        logger.debug(f"Job {job.id}: {source.id} -> {target.id}, transit {transit:.4g}h")

    def _on_delivery(self, job: Job, site_id: str) -> None:
        site = self.sites[site_id]
        site.inbound.pop(job.id)
        admit(job, site.queues, self.now, site_id, boost=self.config.migration.boost)

        record = self.in_flight.pop(job.id)
        record.delivered_at = self.now
        self.metrics.jobs[job.id].transit_time += self.now - record.time
        self.metrics.jobs[job.id].site = site_id
        site.totals.imports += 1
        site.window.record_arrival(self.now)

        self._after_arrival(site)

    # ---------------------------------------------------------------- overlay

    def _on_crash(self, node_id: str) -> None:
        if node_id not in self.overlay.nodes:
            raise InvariantError(f"Node {node_id} is not part of the overlay.")
        self.overlay.crash(node_id)
        self._push(
            self.now + self.config.overlay.detection_delay, EventKind.HEARTBEAT, node_id
        )

    def _on_heartbeat(self, node_id: str) -> None:
        self.overlay.detect(node_id)
        self.overlay.settle()
        self._refresh()
        lost = sorted(site_id for site_id, alive in self.reachable.items() if not alive)
        logger.info(
            f"[bold]{node_id}[/] missed {self.config.overlay.timeout_beats} heartbeats at "
            f"{self.now:.4g}h; unreachable sites: {lost or 'none'}"
        )
        self._retry_held()

    # ---------------------------------------------------------------- records

    def _touch(self, site: SiteRuntime) -> None:
        self._touched[site.id] = site

    def _flush_samples(self) -> None:
        samples = self.metrics.samples
        for site in self._touched.values():
            sample = site.sample(self.now)
            index = self._last_sample.get(site.id)
            if index is not None:
                last = samples[index]
                if last.time == sample.time:
                    samples[index] = sample
                    continue
                if (
                    last.queued, last.running, last.busy_slots,
                    last.inbound, last.imports, last.exports,
                ) == (
                    sample.queued, sample.running, sample.busy_slots,
                    sample.inbound, sample.imports, sample.exports,
                ):
                    continue
            self._last_sample[site.id] = len(samples)
            samples.append(sample)
        self._touched.clear()

    def _check(self) -> None:
        queued = running = inbound = 0
        for site in self.sites.values():
            if not 0 <= site.busy <= site.capacity:
                raise InvariantError(
                    f"Site {site.id} runs {site.busy} slots of {site.capacity} at {self.now}."
                )
            misplaced = site.queues.misplaced()
            if misplaced:
                raise InvariantError(
                    f"Site {site.id}: {[job.id for job in misplaced]} sit in the wrong queue."
                )
            queued += len(site.queues)
            running += len(site.running)
            inbound += len(site.inbound)

        accounted = self.completed + queued + running + inbound + len(self.held)
        if accounted != self.submitted:
            raise InvariantError(
                f"{self.submitted} jobs submitted but {accounted} accounted for at {self.now}."
            )


def run(
    scenario: Scenario,
    policy: Union[str, Policy] = Policy.DIANA,
    seed: int = 0,
    trace: Optional[List[Arrival]] = None,
    check_invariants: bool = False,
) -> Metrics:
    """
    Simulate a scenario under one policy.

    Args:
        scenario (Scenario): Validated scenario.
        policy (str | Policy, optional): diana, greedy or fcfs. Defaults to diana.
        seed (int, optional): Workload seed. Defaults to 0.
        trace (List[Arrival], optional): Trace to replay instead of drawing one.
        check_invariants (bool, optional): Check invariants after every event. Defaults to False.

    Returns:
        Metrics: Same inputs always give the same metrics.
    """
    return Simulation(scenario, policy, seed, trace, check_invariants).run()


def compare(
    scenario: Scenario,
    policies: Sequence[Union[str, Policy]],
    seed: int = 0,
    check_invariants: bool = False,
) -> List[Tuple[Policy, Metrics]]:
    """
    Replay one workload trace under several policies.

    Raises:
        InvariantError: With fewer than 2 policies.
    """
    policies = [Policy.parse(policy) for policy in policies]
    if len(policies) < 2:
        raise InvariantError(
            f"Comparing needs at least 2 policies. Got {len(policies)} instead."
        )

    trace = materialize(scenario, seed)
    return [
        (policy, run(scenario, policy, seed, trace, check_invariants)) for policy in policies
    ]
