import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slmfg.grid import GridSpec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, message); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {msg}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1():
    """Unit-step 1-D grid on [0, 4] with two time steps."""
    return GridSpec(1, 1.0, 0.5, 1.0, (0.0,), (4.0,))


@pytest.fixture
def grid2():
    return GridSpec(2, 1.0, 0.5, 1.0, (0.0, 0.0), (3.0, 3.0))


@pytest.fixture(autouse=True)
def _quiet_box_warnings():
    from slmfg.hjb import ControlBoxWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ControlBoxWarning)
        yield
