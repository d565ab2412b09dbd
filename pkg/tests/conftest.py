import sys

import pytest

from tflab import _accel


@pytest.fixture(params=["jit", "numpy"])
def backend(request, monkeypatch):
    """Run a test once through the numba kernels and once through numpy."""
    if request.param == "jit" and _accel.numba is None:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "JIT_ENABLED", request.param == "jit")
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
