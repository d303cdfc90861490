import numpy as np
import pytest

from fidlens.stats import GaussianStats


def random_spd(rng, d, scale=1.0):
    """Well-conditioned random SPD matrix."""
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T / d + 0.5 * np.eye(d))


def random_stats(rng, d, count=100, scale=1.0):
    return GaussianStats(
        mean=rng.standard_normal(d), cov=random_spd(rng, d, scale), count=count
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
