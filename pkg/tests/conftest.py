import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from rhem.events import Event, EventStore

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TOY = [("A", "B"), ("A", "C"), ("B", "C"), ("C", "D", "E", "F", "G"), ("F", "H", "I")]


def toy_events(network="n"):
    return [Event(f"e{i + 1}", float(i + 1), network, h) for i, h in enumerate(TOY)]


@pytest.fixture
def toy_store():
    return EventStore(toy_events())


@pytest.fixture(params=["cython", "python"])
def backend(request):
    from rhem import kernels
    if request.param not in kernels.available_backends():
        pytest.skip("compiled kernels not built")
    return request.param


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
