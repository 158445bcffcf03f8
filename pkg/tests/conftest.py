"""Shared fixtures, hypothesis profile and the acceptance summary printer."""

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from funcrc.experiments import HarnessOptions, run_scenario
from funcrc.simgen import ScenarioConfig

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

#: one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def record_acceptance(number: int, passed: bool, detail: str):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])


def scenario_rows(**cfg_fields):
    """Replicate rows of a scenario, computed once per session.

    Runs that differ only in the replicate count share their common leading
    replicates. Set ``FUNCRC_JOBS`` to spread replicates over worker
    processes; results do not depend on it.
    """
    cfg = ScenarioConfig(**cfg_fields)
    key = cfg.replace(replicates=1)
    rows = _ROWS.setdefault(key, [])
    if len(rows) < cfg.replicates:
        jobs = int(os.environ.get("FUNCRC_JOBS", "1"))
        rows.extend(run_scenario(cfg, HarnessOptions(), range(len(rows), cfg.replicates), jobs))
    return tuple(rows[: cfg.replicates])


_ROWS = {}


def column(rows, name):
    return np.array([r[name] for r in rows], dtype=float)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
