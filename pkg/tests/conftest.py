import math

import numpy as np
import pytest

from douglas_ab import jets
from douglas_ab.catalog import alpha_beta_catalog, make_pair, phi_catalog
from douglas_ab.cli import sample_points


def central_diff(f, x, h=1e-5):
    """Fourth-order central difference of a scalar function."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def fd_gradient(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = 1.0
        out.append(central_diff(lambda t: np.asarray(f(x + t * e), dtype=float), 0.0, h))
    return np.stack(out, axis=-1)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240601))


@pytest.fixture(scope="session")
def pair_factory():
    cache = {}

    def build(ab_id, phi_id, ab_params=None, phi_params=None):
        key = (ab_id, phi_id, repr(ab_params), repr(phi_params))
        if key not in cache:
            ab = alpha_beta_catalog(ab_id, **(ab_params or {}))
            ph = phi_catalog(phi_id, **(phi_params or {}))
            cache[key] = make_pair(ab, ph)
        return cache[key]

    return build


@pytest.fixture
def draw(rng):
    """Admissible (x, y) samples for a pair."""

    def sample(pair, count):
        return sample_points(rng, pair.ab, pair.phi, count)

    return sample


__all__ = ["central_diff", "fd_gradient", "jets", "math"]
