import time

import numpy as np
import pytest

from stability_lab.dataset import Dataset, generate_hastie

SUITE_BUDGET_S = 300.0
_start = {}
_criteria: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    """Store one acceptance verdict line; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
    _criteria[number] = line
    print(line)
    return ok


def pytest_sessionstart(session):
    _start["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_criteria):
            terminalreporter.write_line(_criteria[n])
    elapsed = time.perf_counter() - _start.get("t", time.perf_counter())
    verdict = "PASS" if elapsed <= SUITE_BUDGET_S else "FAIL"
    terminalreporter.write_line(
        f"[{verdict}] full suite runtime {elapsed:.1f}s (budget {SUITE_BUDGET_S:.0f}s)"
    )


@pytest.fixture(scope="session")
def hastie20():
    return generate_hastie(20, 0)


@pytest.fixture
def two_point():
    return Dataset([[0.0], [10.0]], [0, 1])


def random_dataset(rng: np.random.Generator, m: int, d: int) -> Dataset:
    X = rng.normal(size=(m, d))
    y = rng.integers(0, 2, size=m)
    return Dataset(X, y)
