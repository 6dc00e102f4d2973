import numpy as np
import pytest

from boxcar.model import Box, ConstantCore, ModelSpec, RateFunction


def make_const_model(b=1.0, c=0.0, beta=0.0, box=None):
    """Model with constant rates, the workhorse of the analytic tests."""
    if box is None:
        box = Box(np.array([0.0]), np.array([1.0]))
    return ModelSpec(RateFunction(ConstantCore(b)),
                     RateFunction(ConstantCore(c)),
                     RateFunction(ConstantCore(beta)),
                     box, declared_lipschitz=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_measure(rng, max_atoms=20, max_point=10.0, max_mass=5.0,
                   allow_empty=True):
    import boxcar as bx
    low = 0 if allow_empty else 1
    k = int(rng.integers(low, max_atoms + 1))
    return bx.normalize(rng.uniform(0.0, max_point, k),
                        rng.uniform(0.0, max_mass, k))
