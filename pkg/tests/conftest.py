import numpy as np
import pytest

from tfdmagic import ed


@pytest.fixture(scope="session")
def syk6():
    """One N = 6 realization shared by the ED identity tests."""
    return ed.SYKSystem(ed.sample_couplings(ed.ModelParams(6, 4, 1.0, seed=7)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """``criterion(tag, ok, detail)`` prints one pass/fail line and asserts ``ok``."""

    def report(tag: str, ok: bool, detail: str) -> None:
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
