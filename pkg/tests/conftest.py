import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "magkatok", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("magkatok")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_states(rng, n, lo=0.5, hi=2.0):
    from magkatok.dynamics import CotangentState

    q = rng.normal(size=(n, 3))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    u = rng.normal(size=(n, 3))
    u -= np.einsum("ni,ni->n", u, q)[:, None] * q
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    m = rng.uniform(lo, hi, n)
    return [CotangentState.from_ambient(a, r * b) for a, b, r in zip(q, u, m)]
