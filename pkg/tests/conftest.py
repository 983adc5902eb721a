import math

import pytest
from hypothesis import HealthCheck, settings

from singular_drift import LevyMeasure, MarketParams, UtilityWeights, brownian_driver

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@pytest.fixture
def bm():
    return brownian_driver()


@pytest.fixture
def no_jumps():
    return LevyMeasure()


@pytest.fixture
def explicit_market():
    """Brownian setting with an explicit optimal value."""
    return MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.5, T=1.0, y=0.0)


@pytest.fixture
def log_terminal():
    return UtilityWeights(a=0.0, b=1.0)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """``record(k, ok, detail)`` prints and keeps one verdict line per criterion."""

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"acceptance {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
