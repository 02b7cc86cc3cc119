import numpy as np
import pytest

from cyclicspec.compression import compress
from cyclicspec.measure import detect_atomic_lines, grid_family
from cyclicspec.models import diag3, make_bilateral_shift, sadj3

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def diag3_model():
    return diag3()


@pytest.fixture(scope="session")
def diag3_data(diag3_model):
    return compress(diag3_model, 1)


@pytest.fixture(scope="session")
def diag3_grids(diag3_data):
    from cyclicspec.measure import counting_measure

    _, sd = diag3_data
    xs, ys = detect_atomic_lines([counting_measure(sd)], 1e-12)
    return grid_family(2, 3, atom_lines=xs + ys)


@pytest.fixture(scope="session")
def shift5_data():
    return compress(make_bilateral_shift(5), 2)


@pytest.fixture(scope="session")
def shift_data_40():
    return compress(make_bilateral_shift(82), 40)


@pytest.fixture(scope="session")
def sadj3_data():
    return compress(sadj3(), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
