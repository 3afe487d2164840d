from typing import Dict, Iterable, List, Optional
from pathlib import Path

from rich.console import Console
from rich.table import Table
import pandas as pd

from src.components import Metrics


__all__ = [
    "FLOAT_FORMAT",
    "JOB_COLUMNS",
    "SITE_COLUMNS",
    "TOTAL_COLUMNS",
    "MIGRATION_COLUMNS",
    "SUMMARY_COLUMNS",
    "jobs_frame",
    "sites_frame",
    "totals_frame",
    "migrations_frame",
    "summary_frame",
    "with_means",
    "write_csv",
    "write_metrics",
    "summary_table",
    "print_table",
]


# Six significant digits keep the outputs diffable
FLOAT_FORMAT = "%.6g"

JOB_COLUMNS = [
    "job_id", "owner", "group_id", "origin_site", "site", "job_class", "processors",
    "service_time", "submit_time", "start_time", "completion_time", "priority_at_submit",
    "priority_at_start", "queue_at_start", "queue_time", "execution_time", "turnaround",
    "response_time", "migrated",
]
SITE_COLUMNS = [
    "time", "site_id", "queued", "running", "busy_slots", "inbound", "imports", "exports",
]
TOTAL_COLUMNS = [
    "site_id", "cpu_count", "completed", "throughput", "utilization", "imports", "exports",
]
MIGRATION_COLUMNS = [
    "job_id", "time", "source", "target", "state_before", "local_jobs_ahead",
    "target_jobs_ahead", "local_cost", "target_cost", "delivered_at",
]
SUMMARY_COLUMNS = [
    "scenario", "policy", "seed", "jobs", "completed", "mean_queue_time", "max_queue_time",
    "mean_execution_time", "mean_turnaround", "mean_response_time", "makespan",
    "migrations", "imports", "exports", "messages",
]


def jobs_frame(metrics: Metrics) -> pd.DataFrame:
    rows = [
        {
            "job_id": r.job_id,
            "owner": r.owner,
            "group_id": r.group_id,
            "origin_site": r.origin_site,
            "site": r.site,
            "job_class": r.job_class,
            "processors": r.processors,
            "service_time": r.service_time,
            "submit_time": r.submit_time,
            "start_time": r.start_time,
            "completion_time": r.completion_time,
            "priority_at_submit": r.priority_at_submit,
            "priority_at_start": r.priority_at_start,
            "queue_at_start": f"Q{r.queue_at_start}" if r.queue_at_start else None,
            "queue_time": r.queue_time,
            "execution_time": r.execution_time,
            "turnaround": r.turnaround,
            "response_time": r.response_time,
            "migrated": r.migrated,
        }
        for r in metrics.jobs.values()
    ]
    return pd.DataFrame(rows, columns=JOB_COLUMNS)


def sites_frame(metrics: Metrics) -> pd.DataFrame:
    rows = [
        (s.time, s.site_id, s.queued, s.running, s.busy_slots, s.inbound, s.imports, s.exports)
        for s in metrics.samples
    ]
    return pd.DataFrame(rows, columns=SITE_COLUMNS)


def totals_frame(metrics: Metrics) -> pd.DataFrame:
    rows = [
        (
            site.site_id,
            site.cpu_count,
            site.completed,
            site.throughput(metrics.makespan),
            site.utilization(metrics.makespan),
            site.imports,
            site.exports,
        )
        for site in metrics.sites.values()
    ]
    return pd.DataFrame(rows, columns=TOTAL_COLUMNS)


def migrations_frame(metrics: Metrics) -> pd.DataFrame:
    rows = [
        (
            m.job_id, m.time, m.source, m.target, m.state_before, m.local.jobs_ahead,
            m.chosen.jobs_ahead, m.local.total_cost, m.chosen.total_cost, m.delivered_at,
        )
        for m in metrics.migrations
    ]
    return pd.DataFrame(rows, columns=MIGRATION_COLUMNS)


def summary_frame(runs: Iterable[Metrics]) -> pd.DataFrame:
    """One row per run."""
    return pd.DataFrame([metrics.summary() for metrics in runs], columns=SUMMARY_COLUMNS)


def with_means(summary: pd.DataFrame, keys: Optional[List[str]] = None) -> pd.DataFrame:
    """
    Append one seed-mean row per group of runs.

    Args:
        summary (pd.DataFrame): Rows from ``summary_frame``.
        keys (List[str], optional): Columns that identify a group. Defaults to ["policy", "jobs"].

    Returns:
        pd.DataFrame: The runs followed by their means, ``seed`` set to "mean".
    """
    keys = keys or ["policy", "jobs"]
    numeric = [
        column
        for column in SUMMARY_COLUMNS
        if column not in keys + ["scenario", "seed"] and column in summary
    ]
    means = summary.groupby(keys, sort=False)[numeric].mean().reset_index()
    means["scenario"] = summary["scenario"].iloc[0] if len(summary) else None
    means["seed"] = "mean"

    columns = [column for column in SUMMARY_COLUMNS if column in summary]
    return pd.concat([summary.astype({"seed": object}), means[columns]], ignore_index=True)[
        columns
    ]


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_metrics(metrics: Metrics, out: str) -> Dict[str, Path]:
    """
    Write every table of one run.

    Args:
        metrics (Metrics): The run.
        out (str): Output directory, created when missing.

    Returns:
        Dict[str, Path]: Table name to written file.
    """
    folder = Path(out)
    return {
        "jobs": write_csv(jobs_frame(metrics), folder / "jobs.csv"),
        "sites": write_csv(sites_frame(metrics), folder / "sites.csv"),
        "site_totals": write_csv(totals_frame(metrics), folder / "site_totals.csv"),
        "migrations": write_csv(migrations_frame(metrics), folder / "migrations.csv"),
        "summary": write_csv(summary_frame([metrics]), folder / "summary.csv"),
    }


def summary_table(summary: pd.DataFrame, title: str = "Summary") -> Table:
    """A rich table of the headline columns."""
    columns = [
        column
        for column in (
            "policy", "seed", "jobs", "completed", "mean_queue_time",
            "mean_execution_time", "mean_turnaround", "makespan", "migrations",
        )
        if column in summary
    ]

    table = Table(title=title, header_style="bold")
    for column in columns:
        table.add_column(column, justify="left" if column == "policy" else "right")

    for row in summary[columns].itertuples(index=False):
        table.add_row(
            *(f"{value:.4g}" if isinstance(value, float) else str(value) for value in row)
        )
    return table


def print_table(table: Table) -> None:
    Console().print(table)
