import pytest

from src.components import Policy, Simulation, compare, littles_check, materialize, run
from src.models import InvariantError, NoAliveSite, NotSteadyState
from src.modules import parse_text


SINGLE = """
name: single
sites:
  - {id: s1, cpu_count: 2}
users:
  - {id: u, quota: 1.0}
workload:
  jobs:
    - {id: j, owner: u, site: s1, submit_time: 0.5, service_time: 2.0}
"""

CAPPED = """
name: capped
sites:
  - {id: s1, cpu_count: 4, max_jobs_per_user: 1}
users:
  - {id: u, quota: 1.0}
workload:
  jobs:
    - {id: j, owner: u, site: s1, count: 3}
"""

BLACKOUT = """
name: blackout
sites:
  - {id: s1, cpu_count: 2}
users:
  - {id: u, quota: 1.0}
workload:
  jobs:
    - {id: j, owner: u, site: s1, submit_time: 1.0}
crashes:
  - {node: s1/0, time: 0.0}
"""


def test_single_job():
    metrics = run(parse_text(SINGLE), "diana", check_invariants=True)
    record = metrics.jobs["j"]

    assert record.start_time == 0.5
    assert record.completion_time == 2.5
    assert record.queue_time == 0.0
    assert metrics.makespan == 2.5
    assert metrics.sites["s1"].completed == 1


def test_two_users_share_a_site(fig6):
    metrics = run(fig6, "diana", check_invariants=True)
    jobs = metrics.jobs

    assert jobs["a1"].priority_at_submit == pytest.approx(0.0)
    assert jobs["a2"].priority_at_submit == pytest.approx(-0.4, abs=1e-4)
    assert jobs["b1"].priority_at_submit == pytest.approx(0.6975, abs=1e-4)

    assert jobs["a1"].priority_at_start == pytest.approx(0.4586, abs=1e-4)
    assert jobs["a2"].priority_at_start == pytest.approx(-0.6305, abs=1e-4)
    assert jobs["b1"].priority_at_start == pytest.approx(0.6975, abs=1e-4)
    assert [jobs[j].queue_at_start for j in ("b1", "a1", "a2")] == [1, 2, 4]
    assert all(record.start_time == 0.0 for record in jobs.values())


def test_group_is_split_over_the_largest_sites(fig4):
    metrics = run(fig4, "diana")
    placement = metrics.placements[0]

    assert placement.per_site == {"C": 4000, "D": 6000}
    assert metrics.makespan == pytest.approx(10.0)
    assert metrics.sites["D"].completed == 6000
    assert len(metrics.aggregations) == 1
    assert metrics.aggregations[0].destination == "A"

    manifest = metrics.aggregations[0].entries("bulk")
    assert [entry.subgroup_index for entry in manifest] == [0, 1]
    assert [len(entry.job_ids) for entry in manifest] == [5000, 5000]
    assert {site for entry in manifest for site in entry.site_ids} == {"C", "D"}


def test_fcfs_keeps_the_group_home(fig4):
    metrics = run(fig4, "fcfs")
    assert metrics.sites["A"].completed == 10_000
    assert metrics.makespan == pytest.approx(100.0)


def test_per_user_limit_holds_jobs_back():
    metrics = run(parse_text(CAPPED), "fcfs", check_invariants=True)

    assert metrics.makespan == 3.0
    assert sorted(record.queue_time for record in metrics.jobs.values()) == [0.0, 1.0, 2.0]


def test_jobs_without_a_site_fail_the_run():
    with pytest.raises(NoAliveSite):
        run(parse_text(BLACKOUT), "diana")


def test_same_seed_same_run(scenarios):
    one = run(scenarios["crash"], "diana", seed=2)
    two = run(scenarios["crash"], "diana", seed=2)

    assert one.summary() == two.summary()
    assert [
        (r.job_id, r.site, r.start_time, r.completion_time) for r in one.jobs.values()
    ] == [(r.job_id, r.site, r.start_time, r.completion_time) for r in two.jobs.values()]


def test_traces_are_replayed_untouched(scenarios):
    scenario = scenarios["crash"]
    trace = materialize(scenario, seed=1)
    run(scenario, "greedy", seed=1, trace=trace)

    assert all(job.state.value == "submitted" for arrival in trace for job in arrival.jobs)


def test_overload_exports_stuck_jobs(scenarios):
    metrics = run(scenarios["overload"], "diana", seed=0, check_invariants=True)
    totals = metrics.sites

    assert totals["site1"].exports > 0
    assert sum(site.imports for site in totals.values()) == sum(site.exports for site in totals.values())
    assert totals["site2"].imports + totals["site3"].imports == totals["site1"].exports

    moved = [m.job_id for m in metrics.migrations]
    assert len(moved) == len(set(moved))
    for migration in metrics.migrations:
        assert migration.source != migration.target
        assert migration.chosen.jobs_ahead < migration.local.jobs_ahead
        assert migration.chosen.total_cost < migration.local.total_cost
        assert migration.delivered_at >= migration.time

    assert len(metrics.finished()) == 400


def test_migration_shortens_an_overload(scenarios):
    diana, fcfs = (metrics for _, metrics in compare(scenarios["overload"], ["diana", "fcfs"], seed=0))

    assert diana.makespan < fcfs.makespan
    assert fcfs.migrations == []


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100))
def test_migration_is_safe_for_any_seed(scenarios, seed):
    metrics = run(scenarios["overload"], "diana", seed=seed, check_invariants=True)
    assert len(metrics.finished()) == 400
    assert len({m.job_id for m in metrics.migrations}) == len(metrics.migrations)
    for migration in metrics.migrations:
        assert migration.chosen.jobs_ahead < migration.local.jobs_ahead
        assert migration.chosen.total_cost < migration.local.total_cost


def test_crashes_reroute_new_jobs(scenarios):
    scenario = scenarios["crash"]
    metrics = run(scenario, "diana", seed=0, check_invariants=True)
    detected = 4.0 + scenario.config.overlay.detection_delay

    assert len(metrics.finished()) == 300
    assert metrics.messages["root_failed"] >= 1
    late = [r for r in metrics.jobs.values() if r.submit_time > detected]
    assert late
    assert all(record.site != "site2" for record in late)


def test_compare_shares_one_trace(scenarios):
    results = compare(scenarios["crash"], ["diana", "greedy", "fcfs"], seed=3)

    assert [policy for policy, _ in results] == [Policy.DIANA, Policy.GREEDY, Policy.FCFS]
    submits = [sorted((r.job_id, r.submit_time) for r in m.jobs.values()) for _, m in results]
    assert submits[0] == submits[1] == submits[2]


def test_compare_needs_two_policies(scenarios):
    with pytest.raises(InvariantError):
        compare(scenarios["fig6"], ["diana"])
    with pytest.raises(InvariantError):
        Simulation(scenarios["fig6"], "random")


def test_short_runs_are_not_steady(fig6):
    with pytest.raises(NotSteadyState):
        littles_check(run(fig6, "diana"))


@pytest.mark.slow
def test_single_server_obeys_littles_law(scenarios):
    metrics = run(scenarios["steady"], "diana", seed=0)
    assert littles_check(metrics) < 0.1
