import numpy as np
import pytest


def random_hermitian(rng, N, scale=1.0):
    X = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    return scale * 0.5 * (X + X.conj().T)


def random_frame(rng, r, N):
    return rng.normal(size=(r, N)) + 1j * rng.normal(size=(r, N))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
