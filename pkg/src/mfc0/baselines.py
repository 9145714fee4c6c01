"""PCA and NMF reference methods, clustered with k-means on their coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .clustering import kmeans
from .core import MFC0Error

_TINY = 1e-12


class NegativeInput(MFC0Error, ValueError):
    pass


@dataclass
class BaselineModel:
    kind: str
    basis: np.ndarray
    coeffs: np.ndarray
    variance_kept: Optional[float] = None
    objective_trace: List[float] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def pca_fit(Z, variance=0.95) -> BaselineModel:
    """Keep the fewest principal directions explaining ``variance`` of the total.

    Samples are columns; the data are centered on the mean column.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if not np.all(np.isfinite(Z)):
        raise ValueError("Z must be finite")
    if not 0 < variance <= 1:
        raise ValueError("variance must lie in (0, 1]")
    Zc = Z - Z.mean(axis=1, keepdims=True)
    U, s, _ = np.linalg.svd(Zc, full_matrices=False)
    power = s ** 2
    total = power.sum()
    if total <= 0:
        r, kept = 1, 1.0
    else:
        frac = np.cumsum(power) / total
        # guard against cumulative sums landing a hair under 1
        r = int(np.searchsorted(frac, variance - 1e-12) + 1)
        r = min(r, len(s))
        kept = float(frac[r - 1])
    basis = U[:, :r]
    return BaselineModel("pca", basis, basis.T @ Zc, variance_kept=kept)


def nmf_fit(Z, r, iters=500, tol=1e-5, seed=0) -> BaselineModel:
    """Frobenius-loss NMF ``Z ~ W H`` by Lee-Seung multiplicative updates.

    Stops after ``iters`` sweeps or when the relative objective change drops
    below ``tol``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if np.any(Z < 0):
        raise NegativeInput("NMF needs a nonnegative matrix")
    m, n = Z.shape
    rng = np.random.default_rng(seed)
    scale = np.sqrt(max(Z.mean(), _TINY) / r)
    W = scale * rng.random((m, r)) + _TINY
    H = scale * rng.random((r, n)) + _TINY

    trace = [float(np.sum((Z - W @ H) ** 2))]
    for _ in range(iters):
        H *= (W.T @ Z) / (W.T @ W @ H + _TINY)
        W *= (Z @ H.T) / (W @ (H @ H.T) + _TINY)
        trace.append(float(np.sum((Z - W @ H) ** 2)))
        prev, cur = trace[-2], trace[-1]
        if abs(prev - cur) <= tol * max(prev, _TINY):
            break
    return BaselineModel("nmf", W, H, objective_trace=trace)


def baseline_cluster(model: BaselineModel, K, seed=0):
    """k-means (20 restarts) on the coefficient columns of a baseline model."""
    return kmeans(model.coeffs.T, K, seed=seed, n_restarts=20)
