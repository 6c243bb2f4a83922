from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from haptosim.model import Absorption, Constant, InitialData, PowerLaw, SpatialGrid
from haptosim.regularize import build_family

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def sqrt_coefficient():
    return PowerLaw(0.0, 0.5, 1.0)


@pytest.fixture(scope="session")
def star_grid():
    return SpatialGrid(-1.0, 1.0, 400, (0.0,))


@pytest.fixture(scope="session")
def star_init(star_grid):
    return InitialData.from_functions(star_grid, lambda x: np.ones_like(x), lambda x: np.abs(x))


@pytest.fixture(scope="session")
def star_family(sqrt_coefficient, star_init):
    return build_family(sqrt_coefficient, star_init, 6)


@pytest.fixture(scope="session")
def linear_g():
    return Absorption("linear", 0.0)


@pytest.fixture(scope="session")
def unit_grid():
    return SpatialGrid(0.0, 1.0, 32)


@pytest.fixture(scope="session")
def flat_family(unit_grid):
    init = InitialData.from_functions(unit_grid, lambda x: np.ones_like(x), lambda x: np.ones_like(x))
    return build_family(Constant(1.0), init, 3)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one acceptance line; returns the pass flag so the test can assert it."""

    def _record(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
