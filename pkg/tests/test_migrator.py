import pytest

from src.components import (
    FeedbackQueueSet,
    PeerQueueReport,
    QueueLevel,
    admit,
    jobs_ahead,
    migrate,
    placement_cost,
    release,
    select_target,
)
from src.models import AlreadyMigrated, CostWeights, InvariantError, JobRunning, JobState, SiteState

from .conftest import full_mesh, make_job


def _report(site_id, ahead, cost, length=10, alive=True):
    return PeerQueueReport(site_id, length, ahead, cost, alive)


def test_report_bounds():
    with pytest.raises(InvariantError):
        PeerQueueReport("s", queue_length=2, jobs_ahead=3, total_cost=0.0)


def test_target_must_win_on_both_counts():
    local = _report("here", ahead=5, cost=3.0)

    assert select_target(local, [_report("p1", 2, 1.0), _report("p2", 1, 2.0)]) == "p2"
    assert select_target(local, [_report("p1", 5, 1.0)]) is None
    assert select_target(local, [_report("p1", 1, 3.0)]) is None
    assert select_target(local, [_report("p1", 6, 0.5)]) is None
    assert select_target(local, []) is None


def test_dead_peers_and_self_are_ignored():
    local = _report("here", ahead=5, cost=3.0)
    peers = [_report("p1", 0, 0.1, alive=False), _report("here", 0, 0.1), _report("p2", 3, 2.0)]
    assert select_target(local, peers) == "p2"


def test_ties_go_to_cost_then_id():
    local = _report("here", ahead=5, cost=3.0)
    peers = [_report("p2", 1, 1.0), _report("p1", 1, 1.0), _report("p0", 1, 2.0)]
    assert select_target(local, peers) == "p1"


def test_jobs_ahead_counts_strictly_higher():
    jobs = [make_job(f"j{k}") for k in range(4)]
    for job, value in zip(jobs, (0.9, 0.4, 0.4, -0.2)):
        job.priority = value
    assert jobs_ahead(jobs, 0.4) == 1
    assert jobs_ahead(jobs, -0.5) == 4


def test_release_rules():
    queues = FeedbackQueueSet({"A": 1.0})
    job = make_job("j", "A")
    queues.submit(job, 0.0)

    release(job, queues)
    assert job.state is JobState.MIGRATED
    assert job.migrated_flag
    assert job not in queues

    queues.submit(job, 1.0)
    with pytest.raises(AlreadyMigrated):
        release(job, queues)

    running = make_job("r", "A")
    queues.submit(running, 1.0)
    queues.dequeue_next()
    queues.dequeue_next()
    running.transition(JobState.RUNNING)
    with pytest.raises(JobRunning):
        release(running, queues)


def test_admit_needs_a_released_job():
    with pytest.raises(InvariantError):
        admit(make_job("j", "A"), FeedbackQueueSet({"A": 1.0}), 0.0)


def test_migrated_job_jumps_one_band():
    source = FeedbackQueueSet({"A": 5.0, "B": 1.0})
    destination = FeedbackQueueSet({"A": 5.0, "B": 1.0})

    local = make_job("b", "B")
    destination.submit(local, 0.0)

    job = make_job("a", "A", origin_site="s1", current_site="s1")
    source.submit(job, 0.0)
    migrate(job, source, destination, "s2", 1.0)

    # N = 5 x 2 / (6 x 1), (N - 1) / N = 0.4, boosted by 0.25
    assert job.priority == pytest.approx(0.65)
    assert destination.queue_of(job) is QueueLevel.Q1
    assert local.priority == pytest.approx(-2 / 3)
    assert destination.queue_of(local) is QueueLevel.Q4
    assert job.current_site == "s2"
    assert len(source) == 0

    # The boost survives later sweeps
    destination.submit(make_job("b2", "B"), 2.0)
    assert job.priority == pytest.approx(
        (5 * 3 / 6 - 1) / (5 * 3 / 6) + 0.25
    )


@pytest.mark.parametrize("input_size, target", [(3600.0, "s2"), (32_400.0, None), (36_000.0, None)])
def test_heavy_input_keeps_the_job_by_its_data(input_size, target):
    edges = full_mesh(["s1", "s2"], bandwidth=1.0)
    here = SiteState("s1", cpu_count=4, waiting_queue_length=4, site_load=1.0, hosted_datasets={"raw"})
    there = SiteState("s2", cpu_count=4)
    job = make_job("j", input_size=input_size, dataset="raw", origin_site="s1", current_site="s1")

    def report(site, ahead):
        cost = placement_cost(job, site, edges, CostWeights(), origin="s1", sites=[here, there])
        return PeerQueueReport(site.id, 5, ahead, cost.total_cost)

    # Local computation cost is 9, moving the input costs input_size / 3600
    assert select_target(report(here, 5), [report(there, 0)]) == target
