import numpy as np
import pytest

from maniflow.engine import available_engines


@pytest.fixture(params=sorted(available_engines()))
def tape_cls(request):
    """Runs a test once per built tape engine (py always; cy when compiled)."""
    return available_engines()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
