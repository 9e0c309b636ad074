import numpy as np
import pytest

from wattzoo.core import Trace

ACCEPTANCE_LINES: list[str] = []


def make_trace(power=None, **cols):
    n = len(next(iter(cols.values()))) if cols else len(power)
    data = {"timestamp_s": np.arange(n, dtype=float)}
    if power is not None:
        data["power_w"] = np.asarray(power, dtype=float)
    data.update({k: np.asarray(v, dtype=float) for k, v in cols.items()})
    return Trace(data, source="test")


@pytest.fixture
def trace_factory():
    return make_trace


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
