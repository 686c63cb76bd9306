from __future__ import annotations

import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# numba probes the TBB layer on first parallel use; irrelevant on one core
warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session")
def systems():
    from mintime.systems import REGISTRY, registry_lookup
    return {name: registry_lookup(name) for name in REGISTRY}


@pytest.fixture(scope="session")
def heisenberg_field():
    """LF solve for K = ball(0, 0.05); shared by the eikonal example and the shooting check."""
    from mintime.eikonal import solve_min_time
    from mintime.grid import TargetSet, UniformGrid
    from mintime.systems import registry_lookup
    grid = UniformGrid.from_box([-0.6, -0.6, -0.3], [0.6, 0.6, 0.3], [121, 121, 61])
    return solve_min_time(registry_lookup("heisenberg"), TargetSet.ball([0, 0, 0], 0.05), grid)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""
    def record(k: int, ok: bool, detail: str) -> None:
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[k] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
