from __future__ import annotations

import time
from pathlib import Path

import pytest

from cybersis.config import parse_config
from cybersis.experiments import ExperimentSpec, run_benchmark

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record one pass/fail line for the terminal summary and return the flag."""

    def _report(criterion: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"
        print(line)
        request.config.stash[_RESULTS].append(line)
        return passed

    return _report


@pytest.fixture(scope="session")
def shipped_config():
    return parse_config(CONFIGS / "benchmark.json")


def spec_from(cfg, variant=None) -> ExperimentSpec:
    kwargs = {} if variant is None else {"variant": variant}
    return ExperimentSpec(cfg.experiment.name, cfg.model, cfg.cost, cfg.grid, cfg.pia, **kwargs)


@pytest.fixture(scope="session")
def benchmark_run(shipped_config):
    """Benchmark artifact from the shipped config plus its wall-clock time."""
    start = time.perf_counter()
    art = run_benchmark(spec_from(shipped_config))
    return art, time.perf_counter() - start
