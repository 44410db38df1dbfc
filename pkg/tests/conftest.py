import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rel_fro(a, b):
    scale = max(np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / scale


def split_blocks(y, b):
    return [y[:, i * b:(i + 1) * b] for i in range(y.shape[1] // b)]
