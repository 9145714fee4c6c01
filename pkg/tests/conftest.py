import logging

import numpy as np
import pytest

logging.getLogger("mfc0").setLevel(logging.ERROR)


def random_orthonormal(rng, m, d):
    Q, R = np.linalg.qr(rng.standard_normal((m, d)))
    return Q * np.sign(np.diag(R))


def exact_factorization(rng, m, K, d0, n_k):
    """Nonnegative orthonormal basis (disjoint supports) and block-diagonal Y >= 0."""
    d = K * d0
    parts = np.array_split(rng.permutation(m), d)
    X = np.zeros((m, d))
    for j, p in enumerate(parts):
        w = rng.random(len(p)) + 0.1
        X[p, j] = w / np.linalg.norm(w)
    Y = np.zeros((d, K * n_k))
    for k in range(K):
        Y[k * d0:(k + 1) * d0, k * n_k:(k + 1) * n_k] = rng.random((d0, n_k)) + 0.05
    truth = np.repeat(np.arange(K), n_k)
    return X, Y, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
