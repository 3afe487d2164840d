import pytest

from src.models import (
    AlreadyMigrated,
    CostBreakdown,
    GridSimError,
    InvariantError,
    JobGroup,
    JobState,
    LittleCheck,
    NetworkEdge,
    NoAliveSite,
    PriorityContext,
    SiteState,
    ValidationError,
)

from .conftest import make_job


@pytest.mark.parametrize(
    "kwargs",
    [
        {"processors": 0},
        {"input_size": -1.0},
        {"service_time": float("inf")},
    ],
)
def test_job_rejects_bad_values(kwargs):
    with pytest.raises(InvariantError):
        make_job("j", **kwargs)


def test_job_lifecycle_moves_forward_only():
    job = make_job("j")
    job.transition(JobState.QUEUED)
    job.transition(JobState.RUNNING)

    with pytest.raises(InvariantError, match="running -> queued"):
        job.transition(JobState.QUEUED)

    job.transition(JobState.COMPLETED)
    with pytest.raises(InvariantError):
        job.transition(JobState.RUNNING)


def test_queued_job_priority_stays_in_open_range():
    job = make_job("j")
    job.transition(JobState.QUEUED)
    job.set_priority(0.99)

    with pytest.raises(InvariantError):
        job.set_priority(1.0)
    with pytest.raises(InvariantError):
        job.set_priority(-1.0)


def test_migrated_flag_is_set_once():
    job = make_job("j")
    job.mark_migrated()

    with pytest.raises(AlreadyMigrated):
        job.mark_migrated()


def test_group_size_and_owner_must_match():
    jobs = [make_job(f"g.{k}") for k in range(3)]
    group = JobGroup("g", "A", jobs, declared_size=3)
    assert len(group) == 3
    assert group.lineage == "g"

    with pytest.raises(InvariantError):
        JobGroup("g", "A", jobs, declared_size=4)
    with pytest.raises(InvariantError):
        JobGroup("g", "B", jobs, declared_size=3)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"cpu_count": 0},
        {"cpu_count": 4, "site_load": 1.5},
        {"cpu_count": 4, "waiting_queue_length": -1},
        {"cpu_count": 4, "compute_capability": -0.5},
    ],
)
def test_site_state_rejects_bad_values(kwargs):
    with pytest.raises(InvariantError):
        SiteState("s", **kwargs)


@pytest.mark.parametrize(
    "bandwidth, loss_rate", [(0.0, 0.0), (-1.0, 0.0), (1.0, 1.0), (1.0, -0.1)]
)
def test_network_edge_rejects_bad_links(bandwidth, loss_rate):
    with pytest.raises(InvariantError):
        NetworkEdge("a", "b", bandwidth, loss_rate)


def test_cost_breakdown_total_is_the_sum():
    cost = CostBreakdown.of(0.1, 2.0, 0.25)
    assert cost.total_cost == 0.1 + 2.0 + 0.25

    with pytest.raises(InvariantError):
        CostBreakdown(0.1, 2.0, 0.25, 3.0)
    with pytest.raises(InvariantError):
        CostBreakdown.of(-0.1, 0.0, 0.0)


def test_priority_context_threshold():
    ctx = PriorityContext(n=2, t=1, total_processors=7, quota=1900, quota_sum=3600, total_jobs=3)
    assert ctx.threshold == pytest.approx(3.6944, abs=1e-4)

    with pytest.raises(InvariantError):
        PriorityContext(n=4, t=1, total_processors=7, quota=1900, quota_sum=3600, total_jobs=3)


def test_little_check_residual():
    assert LittleCheck(10.0, 5.0, 2.0).residual == pytest.approx(0.0)
    assert LittleCheck(10.0, 5.0, 1.8).residual == pytest.approx(0.1)


def test_errors_share_a_root_and_a_builtin():
    assert issubclass(NoAliveSite, GridSimError)
    assert issubclass(NoAliveSite, LookupError)
    assert issubclass(InvariantError, ValueError)

    error = ValidationError("bad value", field="sites.0.cpu_count", location="x.yaml:3:5")
    assert str(error) == "x.yaml:3:5: bad value [sites.0.cpu_count]"
    assert error.field == "sites.0.cpu_count"
