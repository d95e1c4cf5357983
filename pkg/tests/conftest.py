import pytest

from sdestab.lyapunov import langevin_lyapunov
from sdestab.model import AffineSdeModel, SdeModel, langevin

SEED = 20261019


@pytest.fixture
def ou():
    return langevin(-1.0, 1.0)


@pytest.fixture
def V_sq():
    return langevin_lyapunov(-1.0, 1.0)


@pytest.fixture
def zero_model():
    return AffineSdeModel(A=[[0.0, 0.0], [0.0, 0.0]], B=[[[0.0, 0.0], [0.0, 0.0]]], b=[[0.0, 0.0]], label="zero")


@pytest.fixture
def square_drift():
    return SdeModel(d=1, m=1, drift=lambda x, t: x**2, diffusion=lambda x, t: [[0.0]], label="x^2")


ACCEPTANCE_LINES = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    if call.when == "call":
        item.rep_call_passed = outcome.get_result().passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
