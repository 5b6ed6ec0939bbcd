import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def sphere8():
    from qbx3d.geometry import sphere_domain
    return sphere_domain(8)


@pytest.fixture(scope="session")
def sphere4():
    from qbx3d.geometry import sphere_domain
    return sphere_domain(4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """report(name, ok, detail) prints and records one PASS/FAIL line."""
    lines = request.config._acceptance_lines

    def report(name, ok, detail=""):
        line = "%s  %s  %s" % ("PASS" if ok else "FAIL", name, detail)
        lines.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
