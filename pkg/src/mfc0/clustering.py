"""Downstream tasks on a fitted factorization.

Spectral clustering of ``Y^T Y``, clustering accuracy, block-diagonal
reordering of ``Y``, per-subspace basis extraction and reconstruction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

from .core import MFC0Error

ZERO_DEGREE = 1e-12


class LengthMismatch(MFC0Error, ValueError):
    pass


class DisconnectedGraph(UserWarning):
    """The affinity graph has more than K connected components."""


class UnbalancedAssignment(UserWarning):
    """A subspace received a number of basis columns different from d0."""


@dataclass
class ClusterResult:
    labels: np.ndarray
    accuracy: Optional[float]
    permutation: np.ndarray
    row_assignment: np.ndarray
    row_permutation: Optional[np.ndarray] = None


class BlockView(NamedTuple):
    matrix: np.ndarray
    col_perm: np.ndarray
    row_perm: np.ndarray
    row_assignment: np.ndarray


def affinity(Y):
    """``Y^T Y`` with round-off negatives clamped to zero."""
    Y = np.asarray(Y, dtype=np.float64)
    W = Y.T @ Y
    W = 0.5 * (W + W.T)
    np.maximum(W, 0.0, out=W)
    return W


def _farthest_point_init(F, K, rng):
    n = F.shape[0]
    centers = [int(rng.integers(n))]
    dist = np.sum((F - F[centers[0]]) ** 2, axis=1)
    for _ in range(1, K):
        nxt = int(np.argmax(dist))
        centers.append(nxt)
        dist = np.minimum(dist, np.sum((F - F[nxt]) ** 2, axis=1))
    return F[centers]


def kmeans(F, K, seed=0, n_restarts=20, max_iter=300):
    """Best-of-restarts Lloyd k-means on the rows of ``F``.

    Each restart starts from a farthest-point seeding whose first center is
    drawn from a child of ``seed``; the run with the smallest within-cluster
    sum of squares wins (earliest restart on ties).
    """
    F = np.asarray(F, dtype=np.float64)
    n = F.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    best_labels, best_inertia = None, np.inf
    for child in np.random.SeedSequence(seed).spawn(n_restarts):
        rng = np.random.default_rng(child)
        init = _farthest_point_init(F, K, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            km = KMeans(n_clusters=K, init=init, n_init=1, max_iter=max_iter,
                        algorithm="lloyd").fit(F)
        if best_labels is None or km.inertia_ < best_inertia * (1 - 1e-12):
            best_labels, best_inertia = km.labels_.astype(int), km.inertia_
    return best_labels


def spectral_embedding(W, K):
    """Bottom-K eigenvectors of the symmetric normalized Laplacian, rows normalized."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    deg = W.sum(axis=1)
    deg = np.where(deg > ZERO_DEGREE, deg, ZERO_DEGREE)
    s = 1.0 / np.sqrt(deg)
    L = np.eye(n) - s[:, None] * W * s[None, :]
    top = min(K, n - 1)
    vals, vecs = eigh(L, subset_by_index=[0, top])
    if top == K and vals[K] < 1e-10:
        warnings.warn(f"affinity graph has more than {K} (near-)zero Laplacian eigenvalues",
                      DisconnectedGraph, stacklevel=3)
    F = vecs[:, :K]
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    return F / np.where(norms > 0, norms, 1.0)


def normalized_cut(W, K, seed=0):
    """Normalized-cut spectral clustering of an affinity matrix into ``K`` groups."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if W.shape != (n, n):
        raise ValueError("affinity must be square")
    if K == 1:
        return np.zeros(n, dtype=int)
    if K == n:
        return np.arange(n)
    return kmeans(spectral_embedding(W, K), K, seed=seed)


def _encode(a):
    _, inv = np.unique(np.asarray(a), return_inverse=True)
    return inv.ravel()


def confusion(labels, truth):
    r, s = _encode(labels), _encode(truth)
    C = np.zeros((r.max() + 1, s.max() + 1), dtype=np.int64)
    np.add.at(C, (r, s), 1)
    return C


def accuracy(labels, truth) -> float:
    """Fraction of samples correctly labeled under the best one-to-one label map."""
    labels, truth = np.asarray(labels).ravel(), np.asarray(truth).ravel()
    if labels.shape != truth.shape:
        raise LengthMismatch(f"{labels.size} labels vs {truth.size} ground-truth labels")
    if labels.size == 0:
        return 1.0
    C = confusion(labels, truth)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum()) / labels.size


def block_view(Y, labels, K=None) -> BlockView:
    """Reorder ``Y`` so it is (approximately) block-diagonal.

    Columns are sorted by label. Each row goes to the label holding most of
    its l1 mass (smaller label on ties), then rows are sorted by that label.
    """
    Y = np.asarray(Y, dtype=np.float64)
    labels = np.asarray(labels, dtype=int).ravel()
    if labels.size != Y.shape[1]:
        raise LengthMismatch(f"{labels.size} labels for {Y.shape[1]} columns")
    K = int(labels.max()) + 1 if K is None else int(K)
    col_perm = np.argsort(labels, kind="stable")
    mass = np.zeros((Y.shape[0], K))
    A = np.abs(Y)
    for k in range(K):
        mass[:, k] = A[:, labels == k].sum(axis=1)
    row_assignment = np.argmax(mass, axis=1)
    row_perm = np.argsort(row_assignment, kind="stable")
    return BlockView(Y[np.ix_(row_perm, col_perm)], col_perm, row_perm, row_assignment)


def off_block_mass(Y, labels, row_assignment) -> float:
    """Share of ``sum |Y|`` lying outside the (row group k, column group k) blocks."""
    A = np.abs(np.asarray(Y, dtype=np.float64))
    total = A.sum()
    if total == 0:
        return 0.0
    labels = np.asarray(labels).ravel()
    off = A[np.asarray(row_assignment)[:, None] != labels[None, :]].sum()
    return float(off / total)


def extract_bases(X, row_assignment, K, d0=None):
    """Split the columns of ``X`` into one basis per subspace."""
    X = np.asarray(X, dtype=np.float64)
    row_assignment = np.asarray(row_assignment).ravel()
    if d0 is None:
        d0 = X.shape[1] // K
    bases = []
    for k in range(K):
        Xk = X[:, row_assignment == k]
        if Xk.shape[1] != d0:
            warnings.warn(f"subspace {k} received {Xk.shape[1]} basis columns, expected {d0}",
                          UnbalancedAssignment, stacklevel=2)
        bases.append(Xk)
    return bases


def reconstruct(X, Y):
    return np.asarray(X) @ np.asarray(Y)


def errors_view(E):
    return np.asarray(E)


def cluster(Y, K, truth=None, seed=0) -> ClusterResult:
    """Normalized cut on ``Y^T Y`` followed by block reordering."""
    labels = normalized_cut(affinity(Y), K, seed=seed)
    view = block_view(Y, labels, K)
    acc = None if truth is None else accuracy(labels, truth)
    return ClusterResult(labels=labels, accuracy=acc, permutation=view.col_perm,
                         row_assignment=view.row_assignment, row_permutation=view.row_perm)
