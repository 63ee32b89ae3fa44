import numpy as np
import pytest

from asgfit.geometry import SampleGrid


@pytest.fixture(scope="session")
def grid8():
    return SampleGrid.make(8)


@pytest.fixture(scope="session")
def grid16():
    return SampleGrid.make(16)


@pytest.fixture(scope="session")
def grid32():
    return SampleGrid.make(32)


@pytest.fixture(scope="session")
def grid64():
    return SampleGrid.make(64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
