import os

import numpy as np
import pytest

_ACCEPTANCE: list[str] = []


class AcceptanceLog:
    """Collects one summary line per acceptance criterion."""

    def record(self, criterion: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")

    def skip(self, criterion: str, detail: str) -> None:
        _ACCEPTANCE.append(f"[SKIP] {criterion}: {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def full_mode() -> bool:
    """Full-size Monte Carlo unless JOINTBREAKS_SMOKE=1."""
    return os.environ.get("JOINTBREAKS_SMOKE", "0") != "1"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
