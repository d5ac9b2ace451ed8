import math

import pytest

from online_alloc.model import Bounds
from online_alloc.threshold import make_phi_star


@pytest.fixture
def bounds_e():
    return Bounds(1.0, math.e)


@pytest.fixture
def phi_e(bounds_e):
    return make_phi_star(bounds_e)
