"""Shared fixtures and the acceptance-criterion report.

Acceptance tests register one verdict per criterion through the
`criterion` fixture; the terminal summary then prints one PASS/FAIL
line per criterion so the gate can be read off a single block.
"""

import numpy as np
import pytest

_VERDICTS = {}


def _note(num, label, passed, detail=""):
    _VERDICTS[num] = (label, bool(passed), detail)


@pytest.fixture(scope="session")
def criterion():
    """Callable (num, label, passed, detail) recording one verdict."""
    return _note


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_VERDICTS):
        label, passed, detail = _VERDICTS[num]
        word = "PASS" if passed else "FAIL"
        line = f"criterion {num:>2}: {word}  {label}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
