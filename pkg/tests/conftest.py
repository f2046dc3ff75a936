import numpy as np
import pytest

from kernellab import assemble, build_grid, eigensolve, validate_params

REF_B = (-1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def ref_params():
    return validate_params(3, 3, 4, 0, 1)


@pytest.fixture(scope="session")
def small_system(ref_params):
    """Reference operator on a 1000-node geometric grid (fast)."""
    return assemble(ref_params, build_grid(20, 1000, params=ref_params))


@pytest.fixture(scope="session")
def small_eig(small_system):
    return eigensolve(small_system, 8)


@pytest.fixture(scope="session")
def chain():
    """The (-1, 2, -1)/dr^2 chain with identity mass, n = 100."""
    n, dr = 100, 0.1
    d = np.full(n, 2.0 / dr**2)
    e = np.full(n - 1, -1.0 / dr**2)
    exact = (2.0 - 2.0 * np.cos(np.arange(1, n + 1) * np.pi / (n + 1))) / dr**2
    return d, e, exact


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance verdicts: ``acceptance(number, passed, detail)``."""

    def record(number, passed, detail):
        _ACCEPTANCE[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {detail}")
