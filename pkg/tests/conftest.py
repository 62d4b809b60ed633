from __future__ import annotations

import numpy as np
import pytest

from stochmech.phase_core import builtin_model

MODEL_PARAMS = {
    "free_particle": {"m": 1.3},
    "harmonic": {"m": 0.7, "omega": 1.9},
    "inverted": {"m": 1.1, "lambda": 0.8},
    "pendulum": {"m": 1.0, "gl": 2.0},
    "double_well": {"m": 0.9, "depth": 1.5, "a": 1.2},
}


@pytest.fixture(params=sorted(MODEL_PARAMS))
def any_model(request):
    return builtin_model(request.param, MODEL_PARAMS[request.param])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed together at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance_report():
    def record(number: int, title: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
