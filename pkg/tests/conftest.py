import pytest
from hypothesis import HealthCheck, settings

from weakdiss.coeff import make_family
from weakdiss.zones import ZoneGeometry

settings.register_profile("pkg", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture(scope="session")
def zero():
    return make_family("zero")


@pytest.fixture(scope="session")
def scale05():
    return make_family("scale_invariant", {"mu": 0.5})


@pytest.fixture(scope="session")
def geom05(scale05):
    return ZoneGeometry(2.0, scale05, 2)


@pytest.fixture(scope="session")
def geom0(zero):
    return ZoneGeometry(2.0, zero, 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
