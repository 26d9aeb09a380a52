import numpy as np
import pytest

from qcap.states import random_density


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def full_rank_density(d, rng, floor=1e-3):
    rho = random_density(d, rng)
    return (1 - floor) * rho + floor * np.eye(d) / d


def ket(*amps):
    v = np.asarray(amps, dtype=complex)
    return v / np.linalg.norm(v)
