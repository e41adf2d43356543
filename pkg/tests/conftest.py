"""Shared fixtures: charts, metrics and a cache of bundled scenario runs."""

from __future__ import annotations

import io

import numpy as np
import pytest

from eulerclass import manifolds as MF
from eulerclass.fields import DerivativeEngine

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def exact_engine():
    return DerivativeEngine("exact")


@pytest.fixture(scope="session")
def sphere():
    return MF.sphere_chart()


@pytest.fixture(scope="session")
def round_metric(sphere):
    return MF.round_sphere_metric(sphere)


@pytest.fixture(scope="session")
def torus():
    return MF.torus_chart(2)


@pytest.fixture(scope="session")
def scenario_runs(tmp_path_factory):
    """Run bundled scenarios once per session and cache ``(exit code, report, log)``."""
    from eulerclass.cli import run_scenario

    cache: dict[str, tuple[int, dict, str]] = {}
    root = tmp_path_factory.mktemp("bundled-runs")

    def run(name: str):
        if name not in cache:
            log = io.StringIO()
            code, report = run_scenario(name, out=str(root / name), stream=log)
            cache[name] = (code, report, log.getvalue())
        return cache[name]

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
