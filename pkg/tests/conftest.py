import pathlib

import pytest

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
SCENARIOS = REPO_ROOT / "scenarios"


@pytest.fixture
def scenario_path():
    def get(name: str) -> str:
        return str(SCENARIOS / f"{name}.yaml")
    return get


def all_scenarios() -> list[pathlib.Path]:
    return sorted(SCENARIOS.glob("*.yaml"))
