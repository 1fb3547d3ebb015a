import numpy as np
import pytest

from topobohm.scenario import PAULI


@pytest.fixture
def pauli():
    return PAULI


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
