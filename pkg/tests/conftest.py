import numpy as np
import pytest

from nuwave import tensor as T


def central_difference(f, x, h=1e-5, indices=None):
    """d f(x) / dx by central differences, optionally only at ``indices`` (flat)."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = {}
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-30))


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


@pytest.fixture
def rng():
    return T.Rng(42)
