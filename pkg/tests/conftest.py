import numpy as np
import pytest

from levyavg import _backend


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["python", "cython"])
def each_backend(request):
    """Run a test once per kernel backend; skips cython when it is not built."""
    if request.param == "cython":
        try:
            from levyavg import _kernels  # noqa: F401
        except ImportError:
            pytest.skip("compiled kernels not built")
    prev = _backend.use(request.param)
    yield request.param
    _backend.use(prev)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record a one-line verdict printed in the terminal summary."""
    def record(label, ok, detail):
        _ACCEPTANCE.append(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
