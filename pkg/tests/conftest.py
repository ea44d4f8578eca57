from __future__ import annotations

import numpy as np
import pytest

from creditale.dataset import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(X, y=None, names=None) -> Dataset:
    X = np.asarray(X, dtype=float)
    if y is None:
        y = (np.arange(X.shape[0]) % 2).astype(int)
    names = names or tuple(f"x{j}" for j in range(X.shape[1]))
    return Dataset(X, np.asarray(y), tuple(names))


ACCEPTANCE_LINES: list[str] = []


def acceptance(number: int, ok: bool, detail: str) -> None:
    """Record and print one pass/fail line, then fail the test if needed."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
