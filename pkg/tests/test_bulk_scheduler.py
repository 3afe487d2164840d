import itertools

import numpy as np
import pytest

from src.components import (
    Assignment,
    SubgroupResult,
    aggregate,
    meta_job,
    partition,
    plan_jobs,
    predicted_makespan,
    project_site,
    schedule_group,
    subgroup_size_for,
)
from src.models import (
    CapacityExceeded,
    CostWeights,
    IncompleteGroup,
    JobGroup,
    NetworkEdge,
    NoAliveSite,
    SiteState,
)

from .conftest import full_mesh, make_job


def _fig4_sites():
    return [
        SiteState("A", cpu_count=100),
        SiteState("B", cpu_count=200),
        SiteState("C", cpu_count=400),
        SiteState("D", cpu_count=600),
    ]


@pytest.fixture
def bulk(fig4_jobs):
    return JobGroup("bulk", "vo", fig4_jobs, declared_size=len(fig4_jobs))


@pytest.fixture
def edges():
    return full_mesh(["A", "B", "C", "D"], bandwidth=100.0)


def test_partition_keeps_order_and_lineage():
    jobs = [make_job(f"g.{k}") for k in range(10)]
    group = JobGroup("g", "A", jobs, declared_size=10)
    parts = partition(group, 4)

    assert [len(part) for part in parts] == [4, 4, 2]
    assert [part.id for part in parts] == ["g.0", "g.1", "g.2"]
    assert all(part.parent_id == "g" for part in parts)
    assert [job.id for part in parts for job in part.jobs] == [job.id for job in jobs]
    assert partition(group, 10) == [group]


def test_subgroup_size_prefers_division_factor():
    group = JobGroup("g", "A", [make_job(f"g.{k}") for k in range(10)], declared_size=10)
    assert subgroup_size_for(group, subgroup_size=5) == 5
    assert subgroup_size_for(group, subgroup_size=5, division_factor=3) == 4
    assert subgroup_size_for(group) == 10


def test_meta_job_adds_up_work():
    jobs = [make_job(f"g.{k}", input_size=10.0, executable_size=5.0, service_time=2.0) for k in range(3)]
    meta = meta_job(JobGroup("g", "A", jobs, declared_size=3))
    assert meta.input_size == 30.0
    assert meta.executable_size == 5.0
    assert meta.service_time == 6.0


def test_project_site_fills_free_slots_first():
    site = SiteState("s", cpu_count=10, site_load=0.5)
    projected = project_site(site, 8)
    assert projected.site_load == 1.0
    assert projected.waiting_queue_length == 3


def test_predicted_makespans():
    sites = _fig4_sites()
    whole = [Assignment(0, "D", 10_000)]
    split = [Assignment(0, "C", 4000), Assignment(1, "D", 6000)]

    assert predicted_makespan(whole, sites, 1.0) == pytest.approx(16.6667, abs=1e-4)
    assert predicted_makespan(split, sites, 1.0) == pytest.approx(10.0)
    assert predicted_makespan([], sites, 1.0) == 0.0


def test_split_beats_whole_group(bulk, edges):
    placement = schedule_group(bulk, _fig4_sites(), edges, CostWeights(), subgroup_size=5000)

    assert placement.per_site == {"C": 4000, "D": 6000}
    assert placement.makespan == pytest.approx(10.0)
    assert placement.total_jobs == 10_000
    assert placement.aggregation_destination == "A"


def test_whole_group_when_no_split(bulk, edges):
    placement = schedule_group(bulk, _fig4_sites(), edges, CostWeights())

    assert placement.assignments == (Assignment(0, "D", 10_000),)
    assert placement.makespan == pytest.approx(10_000 / 600)


def test_per_user_limits_push_jobs_elsewhere(bulk, edges):
    placement = schedule_group(
        bulk, _fig4_sites(), edges, CostWeights(), subgroup_size=5000, allowance={"D": 5000}
    )

    assert placement.per_site == {"C": 5000, "D": 5000}
    assert placement.makespan == pytest.approx(12.5)


def test_group_larger_than_the_limits(bulk, edges):
    allowance = {"A": 10, "B": 10, "C": 10, "D": 10}
    with pytest.raises(CapacityExceeded):
        schedule_group(bulk, _fig4_sites(), edges, CostWeights(), subgroup_size=5000, allowance=allowance)


def test_no_alive_site(bulk, edges):
    sites = [SiteState(s.id, s.cpu_count, alive=False) for s in _fig4_sites()]
    with pytest.raises(NoAliveSite):
        schedule_group(bulk, sites, edges, CostWeights())


def test_plan_hands_out_jobs_in_order(bulk, edges):
    placement = schedule_group(bulk, _fig4_sites(), edges, CostWeights(), subgroup_size=5000)
    plan = plan_jobs(bulk, placement)

    assert [(index, site, len(jobs)) for index, site, jobs in plan] == [
        (a.subgroup_index, a.site_id, a.job_count) for a in placement.assignments
    ]
    assert [job.id for _, _, jobs in plan for job in jobs] == [job.id for job in bulk.jobs]


@pytest.mark.parametrize("size", [5000, 1000, 700])
def test_split_keeps_every_subgroup(bulk, edges, size):
    placement = schedule_group(bulk, _fig4_sites(), edges, CostWeights(), subgroup_size=size)
    parts = partition(bulk, size)

    assert placement.subgroup_count == len(parts)
    per_subgroup = {}
    for a in placement.assignments:
        per_subgroup[a.subgroup_index] = per_subgroup.get(a.subgroup_index, 0) + a.job_count
    assert per_subgroup == {index: len(part) for index, part in enumerate(parts)}


def _largest_remainder(total, cpus):
    capacity = sum(cpus)
    shares = [total * count / capacity for count in cpus]
    floors = [int(share) for share in shares]
    order = sorted(range(len(cpus)), key=lambda i: (-(shares[i] - floors[i]), i))
    for i in order[: total - sum(floors)]:
        floors[i] += 1
    return floors


def test_group_plans_against_enumeration():
    rng = np.random.default_rng(11)

    for _ in range(100):
        names = ["s1", "s2", "s3", "s4"][: rng.integers(1, 5)]
        cpus = {name: int(rng.integers(1, 51)) for name in names}
        sites = [SiteState(name, cpu_count=count) for name, count in cpus.items()]
        edges = {
            (a, b): NetworkEdge(a, b, float(rng.uniform(1, 100)), float(rng.uniform(0, 0.2)))
            for a in names
            for b in names
            if a != b
        }

        total = int(rng.integers(200, 2001))
        service = float(rng.choice([0.5, 1.0, 2.0]))
        jobs = [
            make_job(f"g.{k}", owner="vo", service_time=service, origin_site="s1", current_site="s1")
            for k in range(total)
        ]
        group = JobGroup("g", "vo", jobs, declared_size=total)
        size = -(-total // int(rng.integers(1, 21)))

        placement = schedule_group(group, sites, edges, CostWeights(), subgroup_size=size)

        best_single = min(total * service / count for count in cpus.values())
        best_subset = min(
            total * service / sum(cpus[name] for name in subset)
            for k in range(1, len(names) + 1)
            for subset in itertools.combinations(names, k)
        )
        assert placement.total_jobs == total
        assert placement.makespan == pytest.approx(
            predicted_makespan(placement.assignments, sites, service)
        )
        assert best_subset - 1e-9 <= placement.makespan <= best_single + 1e-9

        used = placement.sites
        if len(used) > 1:
            assert placement.subgroup_count == len(partition(group, size))
            counts = _largest_remainder(total, [cpus[name] for name in used])
            assert placement.per_site == dict(zip(used, counts))


def _result(index, completed=True):
    return SubgroupResult("g", index, ("s",), (f"g.{index}",), ((f"g.{index}", 2.0),), completed)


def test_aggregate_collects_every_subgroup():
    merged = aggregate([_result(1), _result(0)], "home", expected={"g": 2})

    assert merged.destination == "home"
    assert [entry.subgroup_index for entry in merged.entries("g")] == [0, 1]
    assert merged.total_output == 4.0


def test_aggregate_refuses_partial_groups():
    with pytest.raises(IncompleteGroup):
        aggregate([_result(0)], "home", expected={"g": 2})
    with pytest.raises(IncompleteGroup):
        aggregate([_result(0), _result(1, completed=False)], "home")
