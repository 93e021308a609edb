import numpy as np
import pytest
from scipy.stats import special_ortho_group

# Overall transition matrix between four shape states, as published (4 d.p.)
PUBLISHED_TRANSITIONS = np.array([
    [0.8628, 0.0712, 0.0135, 0.0525],
    [0.0744, 0.7480, 0.1608, 0.0168],
    [0.0069, 0.0893, 0.8501, 0.0537],
    [0.0655, 0.0178, 0.1588, 0.7578],
])
PUBLISHED_EQUILIBRIUM = np.array([0.213, 0.218, 0.416, 0.153])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def published_transitions():
    return PUBLISHED_TRANSITIONS.copy()


def random_unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_rotation(rng, m):
    return special_ortho_group.rvs(m, random_state=rng)


def random_similarity(rng, config):
    """Rotate, scale and translate a k x m configuration."""
    m = config.shape[1]
    return np.exp(rng.normal()) * config @ random_rotation(rng, m) + rng.normal(0.0, 3.0, size=m)


def random_configs(rng, n, k, m, spread=0.2):
    base = rng.standard_normal((k, m))
    return [random_similarity(rng, base + spread * rng.standard_normal((k, m))) for _ in range(n)]


@pytest.fixture
def make_configs(rng):
    def make(n, k=6, m=3, spread=0.2):
        return random_configs(rng, n, k, m, spread)
    return make


@pytest.fixture
def helpers():
    """Module-level helpers exposed to tests that need their own generator."""
    class Helpers:
        unit = staticmethod(random_unit)
        rotation = staticmethod(random_rotation)
        similarity = staticmethod(random_similarity)
        configs = staticmethod(random_configs)
    return Helpers
