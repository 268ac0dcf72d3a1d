import numpy as np
import pytest

from fbmlab.core import SeedSpec, make_grid


@pytest.fixture
def seed():
    return SeedSpec(20240911)


@pytest.fixture
def unit_grid():
    return make_grid(1.0, 2**8)
