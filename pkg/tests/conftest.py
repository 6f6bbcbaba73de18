import numpy as np
import pytest
from hypothesis import settings

from h12perim import counterexample as cx
from h12perim.density import c_f

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cf():
    return c_f()


@pytest.fixture(scope="session")
def depth3():
    """The full three-stage construction at the 2^22 resolution cap (about 15 s)."""
    return cx.build_sequence(3, resolution_cap=2**22)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
