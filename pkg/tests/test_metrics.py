import pytest

from src.components import JobRecord, Metrics, SiteTotals, default_window, little_terms, littles_check
from src.models import NotSteadyState


def _record(k: int, submit: float, wait: float, run: float, transit: float = 0.0) -> JobRecord:
    return JobRecord(
        job_id=f"j{k}",
        owner="u",
        group_id=None,
        origin_site="s",
        site="s",
        job_class="compute",
        processors=1,
        service_time=run,
        submit_time=submit,
        start_time=submit + wait,
        completion_time=submit + wait + run,
        transit_time=transit,
    )


def _metrics(records) -> Metrics:
    metrics = Metrics("m", "diana", 0)
    metrics.jobs = {record.job_id: record for record in records}
    metrics.makespan = max(record.completion_time for record in records)
    return metrics


def test_job_record_times():
    record = _record(0, submit=1.0, wait=2.0, run=3.0, transit=0.5)

    assert record.response_time == 2.0
    assert record.queue_time == 1.5
    assert record.execution_time == 3.0
    assert record.turnaround == 5.0

    pending = JobRecord("p", "u", None, "s", "s", "compute", 1, 1.0, submit_time=0.0)
    assert not pending.finished
    assert pending.queue_time is None and pending.turnaround is None


def test_site_totals():
    totals = SiteTotals("s", cpu_count=4, completed=8, slot_hours=6.0)
    assert totals.throughput(4.0) == 2.0
    assert totals.utilization(4.0) == pytest.approx(0.375)
    assert totals.utilization(0.0) == 0.0


def test_summary_row():
    metrics = _metrics([_record(k, k, 0.5, 1.0) for k in range(4)])
    row = metrics.summary()

    assert row["jobs"] == row["completed"] == 4
    assert row["mean_queue_time"] == pytest.approx(0.5)
    assert row["mean_turnaround"] == pytest.approx(1.5)
    assert row["makespan"] == pytest.approx(4.5)
    assert row["migrations"] == 0


def test_little_terms_on_a_regular_stream():
    metrics = _metrics([_record(k, float(k), 0.5, 0.25) for k in range(100)])

    assert default_window(metrics) == pytest.approx((9.9, 89.1))
    terms = little_terms(metrics, window=(10.0, 90.0))
    assert terms.arrival_rate == pytest.approx(1.0)
    assert terms.avg_wait == pytest.approx(0.5)
    assert terms.avg_queue_length == pytest.approx(0.5)
    assert littles_check(metrics, window=(10.0, 90.0)) == pytest.approx(0.0, abs=1e-9)


def test_unsteady_windows_are_refused():
    records = [_record(k, float(k), 0.5, 0.25) for k in range(100)]
    for record in records:
        record.completion_time = 1000.0
    metrics = _metrics(records)

    with pytest.raises(NotSteadyState):
        little_terms(metrics, window=(10.0, 90.0))
    with pytest.raises(NotSteadyState):
        little_terms(metrics, window=(200.0, 300.0))
    with pytest.raises(NotSteadyState):
        little_terms(metrics, window=(5.0, 5.0))
