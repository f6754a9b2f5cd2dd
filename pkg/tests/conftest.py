import numpy as np
import pytest

from inertbarrier.paths import SampledPath


def make_path(values, dt=0.25, t0=0.0):
    return SampledPath(t0, dt, np.asarray(values, dtype=float))


def random_walk_path(rng, n_steps=None, dt=None, scale=1.0, start=0.0):
    """Gaussian random walk used as a generic rough test path."""
    if n_steps is None:
        n_steps = int(rng.integers(4, 60))
    if dt is None:
        dt = float(rng.choice([0.01, 0.05, 0.125]))
    steps = rng.normal(0.0, scale * np.sqrt(dt), n_steps)
    values = start + np.concatenate(([0.0], np.cumsum(steps)))
    return SampledPath(0.0, dt, values)


@pytest.fixture
def rng():
    return np.random.default_rng(20250814)
