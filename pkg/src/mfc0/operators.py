"""Closed-form sub-solvers used inside the alternating loop."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

RANK_TOL = 1e-12


class SvdTriple(NamedTuple):
    """Thin SVD ``M = Lfac @ diag(Sigma) @ Rfac.T``."""

    Lfac: np.ndarray
    Sigma: np.ndarray
    Rfac: np.ndarray


def procrustes(A, B, full_output=False):
    """Orthonormal ``D`` minimizing ``||A - D B||_F^2`` subject to ``D.T D = I``.

    Parameters
    ----------
    A : ndarray, shape (m, n)
    B : ndarray, shape (d, n)
        ``d`` must not exceed ``m``.
    full_output : bool
        Also return the SVD of ``A B^T`` and a rank-deficiency flag.

    Returns
    -------
    D : ndarray, shape (m, d)
    svd : SvdTriple
        Only if ``full_output``.
    rank_deficient : bool
        Only if ``full_output``. True when some singular value of ``A B^T``
        is below 1e-12, in which case the minimizer is not unique.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"incompatible shapes {A.shape} and {B.shape}")
    if B.shape[0] > A.shape[0]:
        raise ValueError(f"need d <= m, got d={B.shape[0]}, m={A.shape[0]}")
    M = A @ B.T
    if not np.all(np.isfinite(M)):
        raise FloatingPointError("A @ B.T is not finite")
    L, s, Rt = np.linalg.svd(M, full_matrices=False)
    D = L @ Rt
    if not full_output:
        return D
    return D, SvdTriple(L, s, Rt.T), bool(s.size and s[-1] < RANK_TOL)


def prox_l1(G, tau):
    """Entrywise soft-thresholding ``sign(G) * max(|G| - tau, 0)``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    G = np.asarray(G, dtype=np.float64)
    return np.sign(G) * np.maximum(np.abs(G) - tau, 0.0)


def prox_l21(G, tau):
    """Column-wise shrinkage for the l2,1 norm.

    Column ``g`` becomes ``(1 - tau/||g||) g`` when ``||g|| >= tau`` and zero
    otherwise.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    G = np.asarray(G, dtype=np.float64)
    norms = np.linalg.norm(G, axis=0)
    keep = norms >= tau
    scale = np.zeros_like(norms)
    scale[keep] = 1.0 - tau / norms[keep]
    return G * scale


def prox_nonneg_l0(U, d0):
    """Projection onto nonnegative vectors with at most ``d0`` nonzeros.

    Clamps negatives to zero, then keeps the ``d0`` largest entries of each
    column in place. Ties go to the smaller index. Accepts a single vector
    or a ``d x n`` matrix (processed column by column).
    """
    U = np.asarray(U, dtype=np.float64)
    vector = U.ndim == 1
    if vector:
        U = U[:, None]
    d = U.shape[0]
    if not 1 <= d0 <= d:
        raise ValueError(f"need 1 <= d0 <= d, got d0={d0}, d={d}")
    Up = np.maximum(U, 0.0)
    if d0 == d:
        V = Up
    else:
        # d0-th largest value per column; entries equal to it are admitted
        # in index order until d0 are kept
        thr = np.partition(Up, d - d0, axis=0)[d - d0]
        above = Up > thr
        at = Up == thr
        room = d0 - above.sum(axis=0)
        keep = above | (at & (np.cumsum(at, axis=0) <= room))
        V = np.where(keep, Up, 0.0)
    return V[:, 0] if vector else V
