import numpy as np
import pytest

from icljscc import _accel


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and _accel.numba is None:
        pytest.skip("numba not installed")
    old = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(old)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion: ``acceptance(name, passed, detail)``."""

    def record(name, passed, detail):
        _ACCEPTANCE.append((name, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
