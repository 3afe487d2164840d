from typing import Dict, List, Sequence
from pathlib import Path

import pytest

from src.models import Job, NetworkEdge, NetworkMatrix, Scenario
from src.modules import parse_scenario


SCENARIOS = Path(__file__).resolve().parents[1] / "configs" / "scenarios"


def scenario_path(name: str) -> str:
    return str(SCENARIOS / f"{name}.yaml")


def make_job(job_id: str, owner: str = "A", processors: int = 1, **kwargs) -> Job:
    return Job(id=job_id, owner=owner, processors_required=processors, **kwargs)


def full_mesh(
    site_ids: Sequence[str], bandwidth: float = 10.0, loss_rate: float = 0.0
) -> NetworkMatrix:
    return {
        (a, b): NetworkEdge(a, b, bandwidth, loss_rate)
        for a in site_ids
        for b in site_ids
        if a != b
    }


@pytest.fixture(scope="session")
def scenarios() -> Dict[str, Scenario]:
    return {path.stem: parse_scenario(str(path)) for path in sorted(SCENARIOS.glob("*.yaml"))}


@pytest.fixture
def fig6(scenarios: Dict[str, Scenario]) -> Scenario:
    return scenarios["fig6"]


@pytest.fixture
def fig4(scenarios: Dict[str, Scenario]) -> Scenario:
    return scenarios["fig4"]


@pytest.fixture
def fig6_quotas() -> Dict[str, float]:
    return {"A": 1900.0, "B": 1700.0}


@pytest.fixture
def fig4_jobs() -> List[Job]:
    return [
        make_job(f"bulk.{k}", owner="vo", origin_site="A", current_site="A")
        for k in range(10_000)
    ]
