import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ballistic import kernels  # noqa: E402


@pytest.fixture(params=kernels.available())
def backend(request):
    """Run the test once per available kernel backend."""
    prev = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
