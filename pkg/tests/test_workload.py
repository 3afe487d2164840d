import numpy as np
import pytest

from src.components import job_count, materialize, replay, with_job_count
from src.models import InvariantError
from src.modules import parse_text


BURSTS = """
name: bursts
sites:
  - {id: s1, cpu_count: 4}
  - {id: s2, cpu_count: 4}
network:
  default: {bandwidth: 10.0}
users:
  - {id: u1, quota: 1.0}
  - {id: u2, quota: 2.0}
workload:
  jobs:
    - {id: late, owner: u1, site: s1, submit_time: 5.0}
    - {id: copies, owner: u2, site: s2, submit_time: 1.0, count: 3, burst: true}
  groups:
    - {id: g, owner: u1, site: s1, size: 4, submit_time: 2.0, destination: s2}
  generators:
    - {name: wave, kind: burst, owners: [u1, u2], sites: [s1, s2], count: 7, burst_size: 3, every: 0.5}
    - {name: spread, kind: uniform, owners: [u2], sites: [s2], count: 5, start: 1.0, end: 3.0}
"""


@pytest.fixture
def bursts():
    return parse_text(BURSTS, source="bursts.yaml")


def test_trace_is_time_ordered(bursts):
    trace = materialize(bursts, seed=1)
    times = [arrival.time for arrival in trace]

    assert times == sorted(times)
    assert sum(len(arrival.jobs) for arrival in trace) == job_count(bursts) == 1 + 3 + 4 + 7 + 5


def test_explicit_entries(bursts):
    trace = {arrival.jobs[0].id: arrival for arrival in materialize(bursts)}

    copies = trace["copies.0"]
    assert [job.id for job in copies.jobs] == ["copies.0", "copies.1", "copies.2"]
    assert copies.burst and copies.time == 1.0

    group = trace["g.0"]
    assert group.group is not None and len(group.group) == 4
    assert group.destination == "s2"
    assert all(job.group_id == "g" for job in group.jobs)


def test_burst_generator_shares_owner_and_site(bursts):
    waves = [a for a in materialize(bursts, seed=3) if a.jobs[0].id.startswith("wave-")]

    assert [len(a.jobs) for a in waves] == [3, 3, 1]
    assert [a.time for a in waves] == [0.0, 0.5, 1.0]
    for arrival in waves:
        assert len({job.owner for job in arrival.jobs}) == 1
        assert {job.origin_site for job in arrival.jobs} == {arrival.site}


def test_uniform_generator_stays_in_bounds(bursts):
    spread = [a.time for a in materialize(bursts, seed=5) if a.jobs[0].id.startswith("spread-")]
    assert len(spread) == 5
    assert all(1.0 <= t <= 3.0 for t in spread)


def test_same_seed_same_trace(scenarios):
    sweep = scenarios["sweep"]
    one = materialize(sweep, seed=4)
    two = materialize(sweep, seed=4)
    other = materialize(sweep, seed=5)

    def flat(trace):
        return [(a.time, a.site, [(j.id, j.owner, j.service_time, j.dataset) for j in a.jobs]) for a in trace]

    assert flat(one) == flat(two)
    assert flat(one) != flat(other)


def test_poisson_rate(scenarios):
    trace = materialize(scenarios["steady"], seed=0)
    gaps = np.diff([arrival.time for arrival in trace])
    assert np.mean(gaps) == pytest.approx(1 / 4, rel=0.05)


def test_replay_gives_fresh_jobs(fig6):
    trace = materialize(fig6)
    copy = replay(trace)
    copy[0].jobs[0].priority = 0.3
    assert trace[0].jobs[0].priority == 0.0


def test_rescaling_generators(scenarios):
    crash = scenarios["crash"]
    assert job_count(with_job_count(crash, 42)) == 42

    with pytest.raises(InvariantError):
        with_job_count(scenarios["fig6"], 10)
    with pytest.raises(InvariantError):
        with_job_count(crash, -1)


def test_rescaling_keeps_shares(bursts):
    scaled = with_job_count(bursts, 24)
    assert [spec.count for spec in scaled.workload.generators] == [14, 10]
