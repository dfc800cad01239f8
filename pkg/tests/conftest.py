import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Eight 40x40 textured RGB tiles from two source images."""
    from corpora import write_corpus

    return write_corpus(tmp_path_factory.mktemp("corpus"), ("astronaut", "coffee"), 40, 40, 4)


@pytest.fixture(scope="session")
def eval_corpus(tmp_path_factory):
    from corpora import write_corpus

    return write_corpus(tmp_path_factory.mktemp("eval_corpus"), ("chelsea",), 32, 32, 6)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
