import numpy as np
import pytest

from src.logger import AllocLogger


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def quiet_logger():
    return AllocLogger("test", echo=False)
