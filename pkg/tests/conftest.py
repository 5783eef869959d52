import numpy as np
import pytest
from hypothesis import settings

from snsgap.config import default_config
from snsgap.fourier import grid_for

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    """Default physics at cutoff 8 with short horizons and small ensembles."""
    cfg = default_config()
    return cfg.replace(params=cfg.params.replace(cutoff=8, horizon=2.0), ensemble_size=16,
                       record_stride=40)


def full_spectrum(c):
    """``{k: w_k}`` over every stored wave vector and its mirror."""
    N = c.shape[-1] - 1
    out = {}
    for i in range(2 * N + 1):
        for j in range(N + 1):
            k = (i - N, j)
            if k == (0, 0):
                continue
            out[k] = c[i, j]
            out[(-k[0], -k[1])] = np.conj(c[i, j])
    return out


def norm(c, alpha=0.0):
    return float(grid_for(c.shape[-1] - 1).norm(c, alpha))
