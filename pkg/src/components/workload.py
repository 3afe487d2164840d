from dataclasses import dataclass, field, replace
from typing import List, Optional
import copy
import logging
import math

import numpy as np

from src.models import (
    GeneratorSpec,
    GroupSpec,
    InvariantError,
    Job,
    JobGroup,
    JobSpec,
    Scenario,
)


__all__ = ["Arrival", "materialize", "job_count", "with_job_count", "replay"]


logger = logging.getLogger(__name__)


@dataclass
class Arrival:
    """Jobs submitted together at one site and instant."""

    time: float
    site: str
    jobs: List[Job]
    group: Optional[JobGroup] = None
    burst: bool = False
    destination: Optional[str] = None
    order: int = field(default=0, compare=False)


def _job(job_id: str, owner: str, site: str, spec, service_time: float, processors: int,
         dataset: Optional[str]) -> Job:
    return Job(
        id=job_id,
        owner=owner,
        processors_required=int(processors),
        input_size=float(spec.input_size),
        output_size=float(spec.output_size),
        executable_size=float(spec.executable_size),
        service_time=float(service_time),
        origin_site=site,
        current_site=site,
        dataset=dataset,
        job_class=spec.job_class,
    )


def _from_trace(spec: JobSpec) -> Arrival:
    ids = [spec.id] if spec.count == 1 else [f"{spec.id}.{k}" for k in range(spec.count)]
    jobs = [
        _job(job_id, spec.owner, spec.site, spec, spec.service_time, spec.processors, spec.dataset)
        for job_id in ids
    ]
    return Arrival(spec.submit_time, spec.site, jobs, burst=spec.burst)


def _from_group(spec: GroupSpec) -> Arrival:
    jobs = [
        _job(f"{spec.id}.{k}", spec.owner, spec.site, spec, spec.service_time,
             spec.processors, spec.dataset)
        for k in range(spec.size)
    ]
    for job in jobs:
        job.group_id = spec.id

    group = JobGroup(
        id=spec.id,
        owner=spec.owner,
        jobs=jobs,
        declared_size=spec.size,
        division_factor=spec.division_factor,
    )
    return Arrival(
        spec.submit_time, spec.site, jobs, group=group, burst=True,
        destination=spec.destination or spec.site,
    )


def _arrival_times(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    match spec.kind:
        case "poisson":
            return spec.start + np.cumsum(rng.exponential(1.0 / spec.rate, spec.count))
        case "uniform":
            return np.sort(rng.uniform(spec.start, spec.end, spec.count))
        case _:
            bursts = np.arange(spec.count) // spec.burst_size
            return spec.start + bursts * spec.every


def _from_generator(spec: GeneratorSpec, rng: np.random.Generator) -> List[Arrival]:
    if spec.count == 0:
        return []

    # Draw every column up front so each generator consumes a fixed slice of the stream
    times = _arrival_times(spec, rng)
    owners = rng.choice(len(spec.owners), spec.count)
    sites = rng.choice(len(spec.sites), spec.count)
    processors = rng.choice(np.asarray(spec.processors), spec.count)
    services = spec.service.sample(rng, spec.count)
    datasets = rng.choice(len(spec.datasets), spec.count) if spec.datasets else None

    if spec.kind == "burst":
        # One owner and site per burst
        heads = np.arange(spec.count) - np.arange(spec.count) % spec.burst_size
        owners, sites = owners[heads], sites[heads]

    arrivals: List[Arrival] = []
    for k in range(spec.count):
        site = spec.sites[sites[k]]
        job = _job(
            f"{spec.name}-{k}",
            spec.owners[owners[k]],
            site,
            spec,
            services[k],
            processors[k],
            spec.datasets[datasets[k]] if datasets is not None else None,
        )
        burst = spec.kind == "burst"
        if burst and k % spec.burst_size:
            arrivals[-1].jobs.append(job)
        else:
            arrivals.append(Arrival(float(times[k]), site, [job], burst=burst))
    return arrivals


def materialize(scenario: Scenario, seed: int = 0) -> List[Arrival]:
    """
    Turn a scenario's workload into a concrete, time ordered arrival trace.

    Args:
        scenario (Scenario): The scenario.
        seed (int, optional): Seed of the single numpy generator every stream draws from. Defaults to 0.

    Returns:
        List[Arrival]: Arrivals sorted by (time, declaration order).
    """
    rng = np.random.default_rng(seed)
    workload = scenario.workload

    arrivals = [_from_trace(spec) for spec in workload.jobs]
    arrivals += [_from_group(spec) for spec in workload.groups]
    for spec in workload.generators:
        arrivals += _from_generator(spec, rng)

    for order, arrival in enumerate(arrivals):
        arrival.order = order
    arrivals.sort(key=lambda arrival: (arrival.time, arrival.order))

    logger.debug(
        f"Materialized {sum(len(a.jobs) for a in arrivals)} jobs in {len(arrivals)} arrivals "
        f"for seed {seed}"
    )
    return arrivals


def replay(trace: List[Arrival]) -> List[Arrival]:
    """A fresh copy of a trace, so one trace can feed several runs."""
    return copy.deepcopy(trace)


def job_count(scenario: Scenario) -> int:
    workload = scenario.workload
    return (
        sum(spec.count for spec in workload.jobs)
        + sum(spec.size for spec in workload.groups)
        + sum(spec.count for spec in workload.generators)
    )


def with_job_count(scenario: Scenario, total: int) -> Scenario:
    """
    Rescale every generator so together they submit ``total`` jobs.

    Shares stay proportional to the declared counts; the largest remainders
    take the leftover jobs.

    Raises:
        InvariantError: If the scenario has no generator or ``total`` is negative.
    """
    generators = scenario.workload.generators
    if not generators:
        raise InvariantError(f"Scenario {scenario.name} has no generator to rescale.")
    if total < 0:
        raise InvariantError(f"'total' must be >= 0. Got {total} instead.")

    declared = sum(spec.count for spec in generators)
    weights = (
        [spec.count / declared for spec in generators]
        if declared
        else [1 / len(generators)] * len(generators)
    )
    shares = [total * weight for weight in weights]
    counts = [math.floor(share) for share in shares]
    for i in sorted(range(len(shares)), key=lambda i: (-(shares[i] - counts[i]), i))[
        : total - sum(counts)
    ]:
        counts[i] += 1

    workload = replace(
        scenario.workload,
        generators=tuple(replace(spec, count=count) for spec, count in zip(generators, counts)),
    )
    return replace(scenario, workload=workload)
