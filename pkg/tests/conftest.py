from __future__ import annotations

import json
from pathlib import Path

import pytest

from sosnav import cli

SCENARIO_DIR = Path(cli.__file__).parent / "scenarios"
SCENARIOS = ("empty_room", "narrow_gap", "l_corridor", "small_maze",
             "pillar_field", "twenty_obstacles")


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.json"


@pytest.fixture(scope="session")
def planned_runs(tmp_path_factory) -> dict[str, Path]:
    """One full cmd_plan run per bundled scenario, shared across tests."""
    root = tmp_path_factory.mktemp("plans")
    out: dict[str, Path] = {}
    for name in SCENARIOS:
        out_dir = root / name
        rc = cli.cmd_plan(scenario_path(name), out_dir)
        assert rc == cli.EXIT_OK, f"{name} pipeline failed with exit {rc}"
        out[name] = out_dir
    return out


def load_artifact(out_dir: Path, name: str):
    with open(out_dir / name) as fh:
        return json.load(fh)
