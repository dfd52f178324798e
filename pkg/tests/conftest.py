import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nilgeo.algebra import load_structure

settings.register_profile("nilgeo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nilgeo")


@pytest.fixture(scope="session")
def heis():
    return load_structure("heisenberg")


@pytest.fixture(scope="session")
def heis_r():
    return load_structure("heisenberg_riemannian")


@pytest.fixture(scope="session")
def hxr():
    return load_structure("hxr_riemannian")


@pytest.fixture(scope="session")
def free23():
    return load_structure("free23")


@pytest.fixture(scope="session")
def engel():
    return load_structure("engel_riemannian")


def smooth_control(rng, k, N, modes=4):
    """Random trigonometric control with decaying coefficients."""
    t = np.linspace(0.0, 1.0, N)[:, None]
    vals = rng.normal(size=(1, k))
    for n in range(1, modes + 1):
        vals = vals + rng.normal(size=(1, k)) / n * np.cos(2 * np.pi * n * t + rng.uniform(0, 2 * np.pi, size=(1, k)))
    return vals


CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Record one acceptance line; printed in the terminal summary."""
    def record(number, title, ok, detail=""):
        CRITERIA[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
