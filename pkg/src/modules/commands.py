from typing import Dict, List, Optional, Sequence, Tuple, Union
from pathlib import Path
import logging

from tqdm.contrib.concurrent import process_map
from tqdm import tqdm
import pandas as pd

from src.components import Policy, compare, job_count, run, with_job_count
from src.models import GridSimError, InvariantError, Scenario, ScenarioInvalid

from .report import (
    SUMMARY_COLUMNS,
    print_table,
    summary_table,
    with_means,
    write_csv,
    write_metrics,
)
from .scenario import parse_scenario
from .utils import list_handler, workers_handler


__all__ = ["EXIT_OK", "EXIT_FAILURE", "EXIT_USAGE", "cmd_run", "cmd_compare", "cmd_validate"]


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def cmd_run(
    scenario: str,
    policy: str = "diana",
    seed: int = 0,
    out: str = "results",
    check_invariants: bool = False,
    show: bool = True,
) -> int:
    """
    Simulate one scenario under one policy and write its CSV tables.

    Args:
        scenario (str): Path of the scenario file.
        policy (str, optional): diana, greedy or fcfs. Defaults to "diana".
        seed (int, optional): Workload seed. Defaults to 0.
        out (str, optional): Output directory. Defaults to "results".
        check_invariants (bool, optional): Check invariants after every event. Defaults to False.
        show (bool, optional): Print the summary table. Defaults to True.

    Returns:
        int: 0 on success, 1 on a scenario or run failure, 2 on bad arguments.
    """
    try:
        policy = Policy.parse(policy)
    except InvariantError as error:
        logger.error(f"[red]{error}[/]")
        return EXIT_USAGE

    try:
        parsed = parse_scenario(scenario)
        metrics = run(parsed, policy, int(seed), check_invariants=check_invariants)
        paths = write_metrics(metrics, out)
    except GridSimError as error:
        logger.error(f"[red]{type(error).__name__}[/]: {error}")
        return EXIT_FAILURE

    if show:
        print_table(summary_table(pd.DataFrame([metrics.summary()]), title=parsed.name))
    logger.info(f"Wrote {', '.join(str(path) for path in paths.values())}")
    return EXIT_OK


def _compare_task(task: Tuple[Scenario, Tuple[str, ...], int, Optional[int]]) -> List[Dict]:
    scenario, policies, seed, count = task
    if count is not None:
        scenario = with_job_count(scenario, count)
    return [metrics.summary() for _, metrics in compare(scenario, policies, seed)]


def cmd_compare(
    scenario: str,
    policies: Union[str, Sequence[str]] = ("diana", "greedy", "fcfs"),
    seeds: Union[str, int, Sequence[int]] = (0,),
    out: str = "results",
    sweep: Union[str, int, Sequence[int], None] = None,
    jobs: Union[int, float] = 0,
    show: bool = True,
) -> int:
    """
    Replay the same workload under several policies, for every seed and job count.

    Args:
        scenario (str): Path of the scenario file.
        policies (str | Sequence[str], optional): At least 2 policies.
        seeds (str | int | Sequence[int], optional): Workload seeds. Defaults to (0,).
        out (str, optional): Output directory. Defaults to "results".
        sweep (str | int | Sequence[int], optional): Job counts to rescale the generators to. \
            Defaults to the scenario as written.
        jobs (int | float, optional): Worker processes, see ``workers_handler``. Defaults to 0.
        show (bool, optional): Print the seed-mean table. Defaults to True.

    Returns:
        int: 0 on success, 1 on a scenario or run failure, 2 on bad arguments.
    """
    try:
        policies = tuple(Policy.parse(p).value for p in list_handler(policies))
        seeds = list_handler(seeds, int)
        counts = list_handler(sweep, int) or [None]
        workers = workers_handler(jobs)
    except (InvariantError, TypeError, ValueError) as error:
        logger.error(f"[red]{error}[/]")
        return EXIT_USAGE

    if len(policies) < 2:
        logger.error(f"[red]Comparing needs at least 2 policies. Got {list(policies)} instead.[/]")
        return EXIT_USAGE
    if not seeds:
        logger.error("[red]Comparing needs at least one seed.[/]")
        return EXIT_USAGE

    try:
        parsed = parse_scenario(scenario)
        if counts != [None]:
            # Fails early when nothing can be rescaled
            with_job_count(parsed, counts[0])
        tasks = [(parsed, policies, seed, count) for count in counts for seed in seeds]

        logger.info(
            f"[bold]{parsed.name}[/]: {len(policies)} policies x {len(seeds)} seeds x "
            f"{len(counts)} job counts ({job_count(parsed)} jobs as written)"
        )
        if workers > 0:
            batches = process_map(
                _compare_task, tasks, max_workers=workers, desc="Comparing", chunksize=1
            )
        else:
            batches = [_compare_task(task) for task in tqdm(tasks, desc="Comparing")]
    except GridSimError as error:
        logger.error(f"[red]{type(error).__name__}[/]: {error}")
        return EXIT_FAILURE

    summary = pd.DataFrame([row for batch in batches for row in batch], columns=SUMMARY_COLUMNS)
    table = with_means(summary, keys=["policy", "jobs"])
    path = write_csv(table, Path(out) / "summary.csv")

    if show:
        print_table(summary_table(table[table["seed"] == "mean"], title=f"{parsed.name} (seed means)"))
    logger.info(f"Wrote {path}")
    return EXIT_OK


def cmd_validate(scenario: str) -> int:
    """
    Check a scenario file without running it. Unknown keys only warn.

    Returns:
        int: 0 when valid, 1 otherwise.
    """
    try:
        parsed = parse_scenario(scenario)
    except ScenarioInvalid as error:
        logger.error(f"[red]{type(error).__name__}[/]: {error}")
        return EXIT_FAILURE

    logger.info(
        f"[bold]{parsed.name}[/] is valid: {len(parsed.sites)} sites, {len(parsed.users)} users, "
        f"{job_count(parsed)} jobs declared"
    )
    return EXIT_OK
