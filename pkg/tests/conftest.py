import numpy as np
import pytest

from spde_tumor.mesh import Grid
from spde_tumor.noise import NoiseSpec
from spde_tumor.stepper import ModelParams


@pytest.fixture
def small_grid():
    return Grid(8, 8)


@pytest.fixture
def deterministic_params():
    return ModelParams(noise=NoiseSpec(nu=0.0, sigma_amp=0.0), dt=0.01, t_end=0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
