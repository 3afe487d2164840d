from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple
import logging

import numpy as np

from src.models import (
    ClassifierConfig,
    CostBreakdown,
    CostWeights,
    InvariantError,
    Job,
    JobClass,
    NetworkEdge,
    NetworkMatrix,
    NoAliveSite,
    SiteState,
)

from .cost_model import data_transfer_cost, normalize_breakdowns, placement_cost


__all__ = [
    "ClassifierConfig",
    "RankedSite",
    "reference_edge",
    "classify",
    "sort_key",
    "rank_sites",
    "select_site",
]


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedSite:
    site_id: str
    cost: CostBreakdown
    alive: bool


def reference_edge(edges: NetworkMatrix) -> NetworkEdge:
    """
    A typical link of the grid: median bandwidth and median loss of the matrix.

    Args:
        edges (NetworkMatrix): The scenario's link matrix.

    Returns:
        NetworkEdge: Synthetic edge used to classify jobs.
    """
    if not edges:
        # Single-site grid: nothing ever moves, any positive bandwidth works
        return NetworkEdge("*", "*", bandwidth=1.0, loss_rate=0.0)

    bandwidth = float(np.median([edge.bandwidth for edge in edges.values()]))
    loss = float(np.median([edge.loss_rate for edge in edges.values()]))
    return NetworkEdge("*", "*", bandwidth=bandwidth, loss_rate=loss)


def classify(
    job: Job, reference: NetworkEdge, config: ClassifierConfig = ClassifierConfig()
) -> JobClass:
    """
    Decide whether a job is compute intensive, data intensive, or both.

    Args:
        job (Job): The job. An explicit ``job_class`` wins over the ratio test.
        reference (NetworkEdge): Link used to estimate transfer time.
        config (ClassifierConfig, optional): Dominance cutoffs.

    Returns:
        JobClass: The class of the job.

    Raises:
        InvariantError: If the job has neither service time nor data.
    """
    if job.job_class is not None:
        return job.job_class

    transfer = data_transfer_cost(job, reference)

    if job.service_time == 0:
        if transfer == 0:
            raise InvariantError(
                f"Job {job.id}: cannot classify a job with no service time and no data."
            )
        return JobClass.DATA_INTENSIVE

    ratio = transfer / job.service_time

    if ratio >= config.data_dominance_ratio:
        return JobClass.DATA_INTENSIVE
    if ratio <= 1.0 / config.compute_dominance_ratio:
        return JobClass.COMPUTE_INTENSIVE
    return JobClass.BOTH


def sort_key(job_class: JobClass) -> Callable[[RankedSite], Tuple]:
    """Ascending sort key for a job class; site id breaks every tie."""
    match job_class:
        case JobClass.COMPUTE_INTENSIVE:
            return lambda r: (r.cost.computation_cost, r.cost.network_cost, r.site_id)
        case JobClass.DATA_INTENSIVE:
            return lambda r: (r.cost.data_transfer_cost, r.cost.network_cost, r.site_id)
        case _:
            return lambda r: (r.cost.total_cost, r.site_id)


def rank_sites(
    job: Job,
    sites: Sequence[SiteState],
    edges: NetworkMatrix,
    weights: CostWeights,
    job_class: Optional[JobClass] = None,
    classifier: ClassifierConfig = ClassifierConfig(),
    origin: Optional[str] = None,
    normalize: bool = False,
) -> List[RankedSite]:
    """
    Order candidate sites from cheapest to most expensive for a job.

    Compute intensive jobs sort by (computation, network), data intensive
    jobs by (data transfer, network) and the rest by total cost. Dead sites
    stay in the ranking, marked ``alive=False``.

    Args:
        job (Job): The job to place.
        sites (Sequence[SiteState]): Fresh snapshots of the candidate sites.
        edges (NetworkMatrix): Directed link matrix.
        weights (CostWeights): Computation cost weights.
        job_class (JobClass, optional): Precomputed class. Defaults to classifying the job.
        classifier (ClassifierConfig, optional): Cutoffs used when classifying.
        origin (str, optional): Where the job currently is.
        normalize (bool, optional): Min-max normalize components before summing. Defaults to False.

    Returns:
        List[RankedSite]: Sites in ascending cost order.
    """
    if job_class is None:
        job_class = classify(job, reference_edge(edges), classifier)

    costs = [placement_cost(job, site, edges, weights, origin, sites) for site in sites]
    if normalize:
        costs = normalize_breakdowns(costs)

    ranking = [
        RankedSite(site_id=site.id, cost=cost, alive=site.alive)
        for site, cost in zip(sites, costs)
    ]
    return sorted(ranking, key=sort_key(job_class))


def select_site(
    job: Job,
    sites: Sequence[SiteState],
    edges: NetworkMatrix,
    weights: CostWeights,
    job_class: Optional[JobClass] = None,
    classifier: ClassifierConfig = ClassifierConfig(),
    origin: Optional[str] = None,
    normalize: bool = False,
) -> str:
    """
    Pick the cheapest alive site for a job.

    Sites with fewer CPUs than the job requires are never chosen.

    Returns:
        str: Id of the first alive site in rank order.

    Raises:
        NoAliveSite: If no candidate is alive and large enough.
    """
    cpus = {site.id: site.cpu_count for site in sites}

    for ranked in rank_sites(
        job, sites, edges, weights, job_class, classifier, origin, normalize
    ):
        if ranked.alive and cpus[ranked.site_id] >= job.processors_required:
            return ranked.site_id

    raise NoAliveSite(
        f"Job {job.id}: none of {len(sites)} candidate sites is alive with "
        f"{job.processors_required} CPUs."
    )
