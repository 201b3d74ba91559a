import numpy as np
import pytest

from qawa.simcore import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


def assert_close(a, b, tol=1e-12):
    np.testing.assert_allclose(a, b, atol=tol, rtol=0)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion's verdict, then assert it."""

    def check(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {title}"
        if detail:
            line += f"  [{detail}]"
        _CRITERIA[number] = line
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
