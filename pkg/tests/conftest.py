import numpy as np
import pytest

from plaquefsi.mesh import build_strip_mesh


@pytest.fixture(scope="session")
def strip8():
    return build_strip_mesh(1.0, 0.5, 0.5, 8)


@pytest.fixture(scope="session")
def strip16():
    return build_strip_mesh(1.0, 0.5, 0.5, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_CONFIG = """
[geometry]
n = 8

[time]
T = 0.004
dt = 0.001

[output]
cadence = 2
"""


@pytest.fixture
def small_config_text():
    return SMALL_CONFIG


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def criterion():
    """Record ``(ok, detail)`` for an acceptance criterion and return ``ok``."""
    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(ok), detail)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
