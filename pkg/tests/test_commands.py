from pathlib import Path

import pandas as pd
import pytest

from src.modules import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, cmd_compare, cmd_run, cmd_validate
from src.modules.utils import list_handler, workers_handler

from .conftest import scenario_path


def test_run_writes_every_table(tmp_path):
    assert cmd_run(scenario_path("fig6"), "diana", out=str(tmp_path), show=False) == EXIT_OK

    names = {"jobs.csv", "sites.csv", "site_totals.csv", "migrations.csv", "summary.csv"}
    assert names <= {path.name for path in tmp_path.iterdir()}

    jobs = pd.read_csv(tmp_path / "jobs.csv").set_index("job_id")
    assert jobs.loc["b1", "queue_at_start"] == "Q1"
    assert jobs.loc["a2", "queue_at_start"] == "Q4"
    assert jobs.loc["a1", "priority_at_start"] == pytest.approx(0.4586, abs=1e-4)

    summary = pd.read_csv(tmp_path / "summary.csv")
    assert summary.loc[0, "completed"] == 3


def test_runs_are_byte_identical(tmp_path):
    for folder in ("one", "two"):
        code = cmd_run(scenario_path("crash"), "diana", seed=1, out=str(tmp_path / folder), show=False)
        assert code == EXIT_OK

    for name in ("jobs.csv", "sites.csv", "site_totals.csv", "migrations.csv", "summary.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_run_exit_codes(tmp_path):
    assert cmd_run(scenario_path("fig6"), "lottery", out=str(tmp_path), show=False) == EXIT_USAGE
    assert cmd_run("missing.yaml", "diana", out=str(tmp_path), show=False) == EXIT_FAILURE


def test_compare_writes_seed_means(tmp_path):
    code = cmd_compare(
        scenario_path("crash"), "diana,fcfs", seeds="0,1", out=str(tmp_path), sweep=[30, 60], show=False
    )
    assert code == EXIT_OK

    summary = pd.read_csv(tmp_path / "summary.csv", dtype={"seed": str})
    assert len(summary) == 2 * 2 * 2 + 2 * 2
    means = summary[summary["seed"] == "mean"]
    assert sorted(zip(means["policy"], means["jobs"])) == [
        ("diana", 30), ("diana", 60), ("fcfs", 30), ("fcfs", 60)
    ]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"policies": "diana"},
        {"policies": "diana,coinflip"},
        {"seeds": ""},
        {"jobs": 10_000},
    ],
)
def test_compare_usage_errors(tmp_path, kwargs):
    assert cmd_compare(scenario_path("crash"), out=str(tmp_path), show=False, **kwargs) == EXIT_USAGE


def test_compare_cannot_sweep_a_fixed_trace(tmp_path):
    code = cmd_compare(scenario_path("fig6"), "diana,fcfs", out=str(tmp_path), sweep=10, show=False)
    assert code == EXIT_FAILURE


def test_validate(tmp_path):
    assert cmd_validate(scenario_path("fig4")) == EXIT_OK

    broken = Path(tmp_path) / "broken.yaml"
    broken.write_text("sites: []\nusers: [{id: u, quota: 1}]\n", encoding="utf-8")
    assert cmd_validate(str(broken)) == EXIT_FAILURE


def test_list_handler():
    assert list_handler("diana, fcfs") == ["diana", "fcfs"]
    assert list_handler("[0,1,2]", int) == [0, 1, 2]
    assert list_handler(3, int) == [3]
    assert list_handler(None) == []


def test_workers_handler():
    assert workers_handler(0) == 0
    assert workers_handler(True) == 0
    with pytest.raises(ValueError):
        workers_handler(-1)


@pytest.mark.slow
def test_queue_time_over_the_job_count_sweep(tmp_path):
    counts = [25, 50, 100, 250, 500, 750, 1000]
    code = cmd_compare(
        scenario_path("sweep"),
        "diana,greedy,fcfs",
        seeds=list(range(10)),
        out=str(tmp_path),
        sweep=counts,
        show=False,
    )
    assert code == EXIT_OK

    summary = pd.read_csv(tmp_path / "summary.csv", dtype={"seed": str})
    means = summary[summary["seed"] == "mean"]
    for policy, rows in means.groupby("policy"):
        rows = rows.sort_values("jobs")
        assert rows["jobs"].tolist() == counts
        assert rows["mean_queue_time"].is_monotonic_increasing, policy

    last = means[means["jobs"] == 1000].set_index("policy")["mean_queue_time"]
    assert last["diana"] <= last["greedy"]
    assert last["diana"] <= last["fcfs"]
