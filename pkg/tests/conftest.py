import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def random_monotone_array(rng, kmax, a0=0.0, normalize=True):
    """Nonnegative nondecreasing sequence of length kmax+1 starting at a0."""
    inc = rng.random(kmax)
    a = np.concatenate([[a0], a0 + np.cumsum(inc)])
    if normalize and a[-1] > 0:
        a = a / a[-1]
    return a


def random_monotone_state(rng, kmax, **kw):
    from dyadicflow.model import DyadicState

    return DyadicState(t=0.0, a=random_monotone_array(rng, kmax, **kw))
