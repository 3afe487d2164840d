from typing import Iterable, List, Optional, Sequence

from src.models import (
    CostBreakdown,
    CostWeights,
    InvariantError,
    Job,
    NetworkEdge,
    NetworkMatrix,
    SiteState,
)


__all__ = [
    "SECONDS_PER_HOUR",
    "network_cost",
    "computation_cost",
    "data_transfer_cost",
    "total_cost",
    "transfer_hours",
    "input_source",
    "placement_cost",
    "stage_in_hours",
    "normalize_breakdowns",
]


SECONDS_PER_HOUR = 3600.0


def network_cost(edge: NetworkEdge) -> float:
    """
    Network cost of a link: losses over bandwidth.

    Args:
        edge (NetworkEdge): The link to evaluate.

    Returns:
        float: ``loss_rate / bandwidth``.
    """
    return edge.loss_rate / edge.bandwidth


def computation_cost(site: SiteState, weights: CostWeights) -> float:
    """
    Computation cost of a site, as printed: (Q/P)·w5 + (Q/P)·w6 + SiteLoad·w7.

    Args:
        site (SiteState): Site snapshot (Q = waiting queue length, P = compute capability).
        weights (CostWeights): w5, w6, w7.

    Returns:
        float: The weighted cost.

    Raises:
        InvariantError: If the site has zero compute capability.
    """
    if site.compute_capability == 0:
        raise InvariantError(
            f"Site {site.id}: computation cost is undefined for zero compute capability."
        )
    ratio = site.waiting_queue_length / site.compute_capability
    return ratio * weights.w5 + ratio * weights.w6 + site.site_load * weights.w7


def transfer_hours(size: float, edge: NetworkEdge) -> float:
    """Hours needed to move ``size`` MB over ``edge`` with loss-driven retransmission."""
    if size == 0:
        return 0.0
    return size / (edge.bandwidth * (1.0 - edge.loss_rate)) / SECONDS_PER_HOUR


def data_transfer_cost(job: Job, edge: NetworkEdge) -> float:
    """
    Input + output + executable transfer time over one link, in hours.

    Args:
        job (Job): The job whose data moves.
        edge (NetworkEdge): The link all three transfers use.

    Returns:
        float: Sum of the three transfer times.
    """
    return (
        transfer_hours(job.input_size, edge)
        + transfer_hours(job.output_size, edge)
        + transfer_hours(job.executable_size, edge)
    )


def total_cost(
    job: Job, site: SiteState, edge: NetworkEdge, weights: CostWeights
) -> CostBreakdown:
    """
    Network + computation + data transfer cost for a (job, site) pair over one link.

    Args:
        job (Job): The job to place.
        site (SiteState): Candidate site.
        edge (NetworkEdge): Link from the job's location to the site.
        weights (CostWeights): Computation cost weights.

    Returns:
        CostBreakdown: The three components and their exact sum.
    """
    return CostBreakdown.of(
        network_cost(edge),
        computation_cost(site, weights),
        data_transfer_cost(job, edge),
    )


def input_source(
    job: Job, site: SiteState, sites: Iterable[SiteState], edges: NetworkMatrix, origin: str
) -> Optional[str]:
    """
    Where a job's input is read from when it runs on ``site``.

    Returns:
        str | None: None when the input is already at ``site``, else the hosting site
        with the cheapest link to ``site`` (ties by id), else ``origin``.
    """
    if job.dataset is None:
        return None if origin == site.id else origin

    if job.dataset in site.hosted_datasets:
        return None

    hosts = sorted(
        other.id
        for other in sites
        if job.dataset in other.hosted_datasets and (other.id, site.id) in edges
    )
    if not hosts:
        return None if origin == site.id else origin

    return min(hosts, key=lambda host: (transfer_hours(1.0, edges[(host, site.id)]), host))


def placement_cost(
    job: Job,
    site: SiteState,
    edges: NetworkMatrix,
    weights: CostWeights,
    origin: Optional[str] = None,
    sites: Sequence[SiteState] = (),
) -> CostBreakdown:
    """
    Cost of running ``job`` on ``site`` when it currently sits at ``origin``.

    Executable and output travel between origin and site; input comes from
    wherever the dataset is closest. Local links cost nothing.

    Args:
        job (Job): The job to place.
        site (SiteState): Candidate site.
        edges (NetworkMatrix): Directed link matrix.
        weights (CostWeights): Computation cost weights.
        origin (str, optional): Site the job is at. Defaults to the job's current or origin site.
        sites (Sequence[SiteState], optional): All sites, used to find dataset replicas.

    Returns:
        CostBreakdown: The placement cost.
    """
    origin = origin or job.current_site or job.origin_site or site.id
    remote = origin != site.id

    network = network_cost(edges[(origin, site.id)]) if remote else 0.0

    transfer = 0.0
    if remote:
        transfer += transfer_hours(job.executable_size, edges[(origin, site.id)])
        transfer += transfer_hours(job.output_size, edges[(site.id, origin)])

    source = input_source(job, site, sites, edges, origin)
    if source is not None:
        transfer += transfer_hours(job.input_size, edges[(source, site.id)])

    return CostBreakdown.of(network, computation_cost(site, weights), transfer)


def stage_in_hours(
    job: Job,
    site: SiteState,
    edges: NetworkMatrix,
    origin: str,
    sites: Sequence[SiteState] = (),
) -> float:
    """Time before ``job`` can reach the queue of ``site``: input and executable transfer."""
    hours = 0.0
    if origin != site.id:
        hours += transfer_hours(job.executable_size, edges[(origin, site.id)])

    source = input_source(job, site, sites, edges, origin)
    if source is not None:
        hours += transfer_hours(job.input_size, edges[(source, site.id)])

    return hours


def normalize_breakdowns(breakdowns: Sequence[CostBreakdown]) -> List[CostBreakdown]:
    """
    Min-max normalize each component over a candidate set, then re-sum.

    Args:
        breakdowns (Sequence[CostBreakdown]): One breakdown per candidate site.

    Returns:
        List[CostBreakdown]: Components scaled to [0, 1]; constant columns become 0.
    """
    if not breakdowns:
        return []

    def scale(values: List[float]) -> List[float]:
        low, high = min(values), max(values)
        if high == low:
            return [0.0] * len(values)
        return [(value - low) / (high - low) for value in values]

    network = scale([b.network_cost for b in breakdowns])
    computation = scale([b.computation_cost for b in breakdowns])
    transfer = scale([b.data_transfer_cost for b in breakdowns])

    return [CostBreakdown.of(*parts) for parts in zip(network, computation, transfer)]
