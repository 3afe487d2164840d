from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
from collections import defaultdict
import logging
import math

from src.models import (
    CapacityExceeded,
    CostWeights,
    IncompleteGroup,
    InvariantError,
    Job,
    JobGroup,
    NetworkMatrix,
    NoAliveSite,
    SiteState,
)

from .site_selector import ClassifierConfig, select_site


__all__ = [
    "Assignment",
    "GroupPlacement",
    "SubgroupResult",
    "AggregatedResult",
    "partition",
    "subgroup_size_for",
    "predicted_makespan",
    "project_site",
    "meta_job",
    "schedule_group",
    "plan_jobs",
    "aggregate",
]


logger = logging.getLogger(__name__)

# Plans whose makespans differ by less than this are considered equal
MAKESPAN_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Assignment:
    """Jobs of one subgroup sent to one site. A subgroup cut over two sites has two."""

    subgroup_index: int
    site_id: str
    job_count: int


@dataclass(frozen=True)
class GroupPlacement:
    group_id: str
    assignments: Tuple[Assignment, ...]
    makespan: float
    aggregation_destination: str

    @property
    def total_jobs(self) -> int:
        return sum(a.job_count for a in self.assignments)

    @property
    def sites(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(a.site_id for a in self.assignments))

    @property
    def per_site(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for a in self.assignments:
            counts[a.site_id] = counts.get(a.site_id, 0) + a.job_count
        return counts

    @property
    def subgroup_count(self) -> int:
        return len({a.subgroup_index for a in self.assignments})


@dataclass(frozen=True)
class SubgroupResult:
    """Output of one finished (or unfinished) subgroup."""

    group_id: str
    subgroup_index: int
    site_ids: Tuple[str, ...]
    job_ids: Tuple[str, ...]
    outputs: Tuple[Tuple[str, float], ...] = ()
    completed: bool = True


@dataclass(frozen=True)
class AggregatedResult:
    destination: str
    groups: Dict[str, Tuple[SubgroupResult, ...]] = field(default_factory=dict)

    def entries(self, group_id: str) -> Tuple[SubgroupResult, ...]:
        return self.groups[group_id]

    @property
    def total_output(self) -> float:
        return sum(
            size
            for entries in self.groups.values()
            for entry in entries
            for _, size in entry.outputs
        )


def partition(group: JobGroup, subgroup_size: int) -> List[JobGroup]:
    """
    Split a group into ordered subgroups of at most ``subgroup_size`` jobs.

    Args:
        group (JobGroup): The group to split.
        subgroup_size (int): Jobs per subgroup (>= 1).

    Returns:
        List[JobGroup]: ``ceil(len / subgroup_size)`` subgroups sharing the group's lineage. \
            A group that already fits is returned unchanged.
    """
    if subgroup_size < 1:
        raise InvariantError(f"'subgroup_size' must be >= 1. Got {subgroup_size} instead.")

    if len(group) <= subgroup_size:
        return [group]

    subgroups = []
    for index, start in enumerate(range(0, len(group), subgroup_size)):
        jobs = group.jobs[start : start + subgroup_size]
        subgroups.append(
            JobGroup(
                id=f"{group.lineage}.{index}",
                owner=group.owner,
                jobs=list(jobs),
                declared_size=len(jobs),
                division_factor=group.division_factor,
                parent_id=group.lineage,
            )
        )
    return subgroups


def subgroup_size_for(
    group: JobGroup,
    subgroup_size: Optional[int] = None,
    division_factor: Optional[int] = None,
) -> int:
    """
    Subgroup size for a group: a division factor wins over a fixed size.

    Args:
        group (JobGroup): The group.
        subgroup_size (int, optional): VO subgroup size.
        division_factor (int, optional): VO division factor. The group's own factor is used when above 1.

    Returns:
        int: Jobs per subgroup. The whole group when nothing is set.
    """
    factor = division_factor or (group.division_factor if group.division_factor > 1 else None)
    if factor:
        return max(1, math.ceil(len(group) / factor))
    if subgroup_size:
        return subgroup_size
    return max(1, len(group))


def predicted_makespan(
    assignments: Sequence[Assignment],
    sites: Sequence[SiteState],
    service_time: float,
) -> float:
    """
    Fluid makespan: the slowest site's ``jobs x service_time / cpu_count``.

    Args:
        assignments (Sequence[Assignment]): Where the jobs go.
        sites (Sequence[SiteState]): Site snapshots, looked up by id.
        service_time (float): Hours per job.

    Returns:
        float: Predicted completion time of the last job, in hours.
    """
    cpus = {site.id: site.cpu_count for site in sites}
    per_site: Dict[str, int] = defaultdict(int)
    for assignment in assignments:
        per_site[assignment.site_id] += assignment.job_count

    if not per_site:
        return 0.0
    return max(jobs * service_time / cpus[site_id] for site_id, jobs in per_site.items())


def project_site(site: SiteState, jobs: int) -> SiteState:
    """
    Site state after ``jobs`` more jobs arrive: free slots fill up first, the rest wait.

    Args:
        site (SiteState): Current snapshot.
        jobs (int): Jobs added.

    Returns:
        SiteState: Snapshot with a longer queue and a higher load.
    """
    busy = round(site.site_load * site.cpu_count)
    free = max(0, site.cpu_count - busy)
    started = min(jobs, free)
    return replace(
        site,
        waiting_queue_length=site.waiting_queue_length + jobs - started,
        site_load=min(1.0, (busy + started) / site.cpu_count),
    )


def meta_job(group: JobGroup) -> Job:
    """A group seen as one job: data and service add up, the executable ships once."""
    first = group.jobs[0]
    datasets = {job.dataset for job in group.jobs}
    classes = {job.job_class for job in group.jobs}
    return Job(
        id=f"{group.id}#meta",
        owner=group.owner,
        processors_required=max(job.processors_required for job in group.jobs),
        input_size=sum(job.input_size for job in group.jobs),
        output_size=sum(job.output_size for job in group.jobs),
        executable_size=max(job.executable_size for job in group.jobs),
        service_time=sum(job.service_time for job in group.jobs),
        origin_site=first.origin_site,
        current_site=first.current_site,
        group_id=group.lineage,
        dataset=first.dataset if len(datasets) == 1 else None,
        job_class=first.job_class if len(classes) == 1 else None,
    )


def _spread(
    total: int, chosen: Sequence[SiteState], allowance: Mapping[str, Optional[int]]
) -> Dict[str, int]:
    """Split ``total`` jobs over sites in proportion to CPUs, largest remainder, within allowances."""
    counts = {site.id: 0 for site in chosen}
    remaining = total
    open_sites = [site for site in chosen if allowance.get(site.id) != 0]

    while remaining > 0 and open_sites:
        capacity = sum(site.cpu_count for site in open_sites)
        shares = [remaining * site.cpu_count / capacity for site in open_sites]
        floors = [math.floor(share) for share in shares]
        leftover = remaining - sum(floors)

        # Largest remainder, ties by site order
        order = sorted(
            range(len(open_sites)), key=lambda i: (-(shares[i] - floors[i]), i)
        )
        for i in order[:leftover]:
            floors[i] += 1

        overflow = False
        for site, share in zip(open_sites, floors):
            limit = allowance.get(site.id)
            room = share if limit is None else min(share, limit - counts[site.id])
            counts[site.id] += room
            remaining -= room
            overflow |= room < share

        open_sites = [
            site
            for site in open_sites
            if allowance.get(site.id) is None or counts[site.id] < allowance[site.id]
        ]
        if not overflow:
            break

    if remaining > 0:
        raise CapacityExceeded(
            f"{remaining} jobs do not fit the per-user limits of sites {sorted(counts)}."
        )
    return counts


def schedule_group(
    group: JobGroup,
    sites: Sequence[SiteState],
    edges: NetworkMatrix,
    weights: CostWeights,
    subgroup_size: Optional[int] = None,
    division_factor: Optional[int] = None,
    classifier: ClassifierConfig = ClassifierConfig(),
    normalize: bool = False,
    origin: Optional[str] = None,
    destination: Optional[str] = None,
    allowance: Optional[Mapping[str, Optional[int]]] = None,
) -> GroupPlacement:
    """
    Place a job group whole on one site, or split it over several, whichever finishes first.

    Args:
        group (JobGroup): The group to place.
        sites (Sequence[SiteState]): Current snapshots of every site.
        edges (NetworkMatrix): Directed link matrix.
        weights (CostWeights): Computation cost weights.
        subgroup_size (int, optional): VO subgroup size. Defaults to no split.
        division_factor (int, optional): VO division factor, overrides ``subgroup_size``.
        classifier (ClassifierConfig, optional): Job class cutoffs.
        normalize (bool, optional): Normalize cost components. Defaults to False.
        origin (str, optional): Site the group was submitted at.
        destination (str, optional): Where outputs are aggregated. Defaults to the origin.
        allowance (Mapping[str, int | None], optional): Jobs each site may still take \
            from the group's owner. None means unlimited.

    Returns:
        GroupPlacement: The chosen plan. Ties go to the plan with fewer sites.

    Raises:
        NoAliveSite: If no alive site can run the group's jobs.
        CapacityExceeded: If per-user limits cannot hold the whole group.
    """
    if not group.jobs:
        raise InvariantError(f"Group {group.id}: cannot schedule an empty group.")

    allowance = dict(allowance or {})
    need = max(job.processors_required for job in group.jobs)
    origin = origin or group.jobs[0].current_site or group.jobs[0].origin_site
    destination = destination or origin or group.id
    service_time = max(job.service_time for job in group.jobs)

    candidates = [
        site
        for site in sites
        if site.alive and site.cpu_count >= need and allowance.get(site.id) != 0
    ]
    if not candidates:
        raise NoAliveSite(f"Group {group.id}: no alive site with {need} CPUs can take it.")

    def pick(subgroup: JobGroup, state: Dict[str, SiteState]) -> str:
        projected = [project_site(site, len(subgroup)) for site in state.values()]
        return select_site(
            meta_job(subgroup), projected, edges, weights,
            classifier=classifier, origin=origin, normalize=normalize,
        )

    by_id = {site.id: site for site in candidates}
    plans: List[Tuple[float, int, Tuple[Assignment, ...]]] = []

    # Check the whole group on one site
    whole_site = pick(group, dict(by_id))
    limit = allowance.get(whole_site)
    if limit is None or limit >= len(group):
        whole = (Assignment(0, whole_site, len(group)),)
        plans.append((predicted_makespan(whole, candidates, service_time), 1, whole))

    # Check the partitioned plan
    size = subgroup_size_for(group, subgroup_size, division_factor)
    subgroups = partition(group, size)
    if len(subgroups) > 1 or not plans:
        state = dict(by_id)
        chosen: List[str] = []
        for subgroup in subgroups:
            site_id = pick(subgroup, state)
            state[site_id] = project_site(state[site_id], len(subgroup))
            if site_id not in chosen:
                chosen.append(site_id)

        # Sites beyond the greedy picks only absorb what the limits push out
        spill = [site.id for site in candidates if site.id not in chosen]
        reachable = chosen + spill
        if not _fits(len(group), reachable, allowance):
            raise CapacityExceeded(
                f"Group {group.id}: {len(group)} jobs exceed what sites {reachable} accept "
                f"from user {group.owner}."
            )
        while not _fits(len(group), chosen, allowance):
            chosen.append(spill.pop(0))

        counts = _spread(len(group), [by_id[s] for s in chosen], allowance)
        split = _cut(
            [len(subgroup) for subgroup in subgroups],
            [(s, counts[s]) for s in chosen if counts[s] > 0],
        )
        used = len({a.site_id for a in split})
        plans.append((predicted_makespan(split, candidates, service_time), used, split))

    makespan, _, assignments = min(
        plans, key=lambda plan: (round(plan[0] / MAKESPAN_TOLERANCE), plan[1])
    )
    logger.debug(
        f"Group {group.id}: {len(group)} jobs over {list(dict.fromkeys(a.site_id for a in assignments))}, "
        f"makespan {makespan:.4g}h"
    )
    return GroupPlacement(group.id, assignments, makespan, destination)


def _cut(sizes: Sequence[int], shares: Sequence[Tuple[str, int]]) -> Tuple[Assignment, ...]:
    """Lay the sites' shares over the subgroups in job order, keeping subgroup indices."""
    assignments: List[Assignment] = []
    pending = list(shares)
    site_id, left = pending.pop(0)

    for index, size in enumerate(sizes):
        while size > 0:
            while left == 0:
                site_id, left = pending.pop(0)
            taken = min(size, left)
            assignments.append(Assignment(index, site_id, taken))
            size -= taken
            left -= taken
    return tuple(assignments)


def _fits(total: int, site_ids: Sequence[str], allowance: Mapping[str, Optional[int]]) -> bool:
    limits = [allowance.get(site_id) for site_id in site_ids]
    if any(limit is None for limit in limits):
        return bool(site_ids)
    return sum(limits) >= total


def plan_jobs(group: JobGroup, placement: GroupPlacement) -> List[Tuple[int, str, List[Job]]]:
    """
    Hand the group's jobs, in order, to the placement's assignments.

    Returns:
        List[Tuple[int, str, List[Job]]]: (subgroup index, site id, jobs) per assignment. \
            A subgroup split over sites shows up once per site.
    """
    if placement.total_jobs != len(group):
        raise InvariantError(
            f"Group {group.id}: placement holds {placement.total_jobs} jobs, group has {len(group)}."
        )

    plan, start = [], 0
    for assignment in placement.assignments:
        jobs = group.jobs[start : start + assignment.job_count]
        plan.append((assignment.subgroup_index, assignment.site_id, list(jobs)))
        start += assignment.job_count
    return plan


def aggregate(
    results: Sequence[SubgroupResult],
    destination: str,
    expected: Optional[Mapping[str, int]] = None,
) -> AggregatedResult:
    """
    Collect every subgroup's output manifest under its parent group id.

    Args:
        results (Sequence[SubgroupResult]): One entry per subgroup.
        destination (str): The user's chosen output location.
        expected (Mapping[str, int], optional): Subgroup count per group id.

    Returns:
        AggregatedResult: Manifests grouped by group id, in subgroup order.

    Raises:
        IncompleteGroup: If a subgroup is unfinished or missing.
    """
    grouped: Dict[str, List[SubgroupResult]] = defaultdict(list)
    for result in results:
        if not result.completed:
            raise IncompleteGroup(
                f"Group {result.group_id}: subgroup {result.subgroup_index} has not finished."
            )
        grouped[result.group_id].append(result)

    for group_id, count in (expected or {}).items():
        got = {entry.subgroup_index for entry in grouped.get(group_id, [])}
        missing = sorted(set(range(count)) - got)
        if missing:
            raise IncompleteGroup(f"Group {group_id}: subgroups {missing} are missing.")

    return AggregatedResult(
        destination=destination,
        groups={
            group_id: tuple(sorted(entries, key=lambda e: e.subgroup_index))
            for group_id, entries in grouped.items()
        },
    )
