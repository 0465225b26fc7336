import numpy as np
import pytest

from uwf.rng import Rng, derive_seed


@pytest.fixture
def rng():
    return Rng(12345)


def random_hermitian(n: int, seed: int) -> np.ndarray:
    A = Rng(seed).complex_normal(n * n).reshape(n, n)
    return 0.5 * (A + A.conj().T)


def random_complex(n: int, seed: int) -> np.ndarray:
    return Rng(seed).complex_normal(n)


def random_real(n: int, seed: int) -> np.ndarray:
    return Rng(seed).normal(n)
