from __future__ import annotations

from pathlib import Path

import pytest

from junction.scenario import ScenarioSpec, load_scenario

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / name


def load_named_scenario(name: str) -> ScenarioSpec:
    return load_scenario(scenario_path(name).read_text())


@pytest.fixture
def fig6_spec() -> ScenarioSpec:
    return load_named_scenario("fig6.json")


@pytest.fixture
def fig6_av_spec() -> ScenarioSpec:
    return load_named_scenario("fig6_av.json")
