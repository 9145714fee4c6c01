"""Alternating-direction solver for column-l0 constrained factorization.

The model is::

    min_{X,Y,E} ||Z - X Y - E||_F^2 + lam * ||E||
    s.t. X^T X = I, Y >= 0, ||y_i||_0 = d0

solved by splitting ``Y = V`` and cycling X, Y, E, V and the multiplier P.
"""

from __future__ import annotations

import logging
import time
from typing import NamedTuple

import numpy as np

from .core import (
    ErrorNorm,
    FactorState,
    FitResult,
    NonFinite,
    Problem,
    SolverConfig,
    SubspaceSpec,
    YUpdateRule,
    validate_problem,
)
from .operators import procrustes, prox_l1, prox_l21, prox_nonneg_l0

log = logging.getLogger(__name__)


class Objective(NamedTuple):
    fit_term: float
    reg_term: float
    total: float


def error_norm_value(E, error_norm) -> float:
    error_norm = ErrorNorm(error_norm)
    if error_norm is ErrorNorm.L1:
        return float(np.abs(E).sum())
    if error_norm is ErrorNorm.L21:
        return float(np.linalg.norm(E, axis=0).sum())
    return 0.0


def objective(Z, X, Y, E, lam, error_norm) -> Objective:
    """Model objective ``||Z - XY - E||_F^2 + lam * ||E||``."""
    return _objective_from_residual(Z - X @ Y, E, lam, error_norm)


def _objective_from_residual(R, E, lam, error_norm) -> Objective:
    # R = Z - XY
    D = R - E if E.any() else R
    fit_term = float(np.vdot(D, D))
    reg_term = float(lam) * error_norm_value(E, error_norm)
    return Objective(fit_term, reg_term, fit_term + reg_term)


def augmented_lagrangian(Z, state: FactorState, lam, error_norm) -> float:
    """Value of the augmented Lagrangian at ``state`` (constraints not checked)."""
    D = state.Y - state.V
    return (objective(Z, state.X, state.Y, state.E, lam, error_norm).total
            + float(np.vdot(state.P, D)) + 0.5 * state.beta * float(np.vdot(D, D)))


def init_state(problem: Problem, seed=None) -> FactorState:
    """Random orthonormal basis, ``Y = X^T Z`` and zero ``E``, ``V``, ``P``."""
    cfg = problem.cfg
    seed = cfg.seed if seed is None else seed
    Z = problem.Z.values
    d = problem.spec.d
    rng = np.random.default_rng(seed)
    X, R = np.linalg.qr(rng.standard_normal((problem.m, d)))
    # fix column signs so the factor is a deterministic function of the draw
    X *= np.where(np.diag(R) < 0, -1.0, 1.0)
    Y = X.T @ Z
    beta = cfg.mu0 if cfg.beta is None else cfg.beta
    return FactorState(
        X=X, Y=Y, V=np.zeros_like(Y), E=np.zeros_like(Z), P=np.zeros_like(Y),
        mu=cfg.mu0, beta=beta,
    )


def update_X(state: FactorState, Z, full_output=False):
    """Procrustes step: ``X = L R^T`` from the SVD of ``(Z - E) Y^T``."""
    X, _, rank_deficient = procrustes(Z - state.E, state.Y, full_output=True)
    if rank_deficient:
        log.debug("(Z - E) Y^T is rank deficient; X update is not unique")
    if full_output:
        return X, rank_deficient
    return X


def update_Y(state: FactorState, Z, rule=YUpdateRule.EXACT):
    """Closed-form Y step.

    With ``rule="exact"`` this is the stationary point
    ``(2 + beta)^-1 (2 X^T (Z - E) + beta V - P)`` of the Y-subproblem;
    ``rule="paper"`` drops the factor 2 on the fit term.
    """
    rule = YUpdateRule(rule)
    XtR = state.X.T @ (Z - state.E)
    b = state.beta
    c = 2.0 if rule is YUpdateRule.EXACT else 1.0
    # in place to keep temporaries down on wide data
    XtR *= c
    XtR += b * state.V
    XtR -= state.P
    XtR /= c + b
    return XtR


def update_E(state: FactorState, Z, cfg: SolverConfig):
    if cfg.error_norm is ErrorNorm.NONE:
        return np.zeros_like(Z)
    G = Z - state.X @ state.Y
    if cfg.error_norm is ErrorNorm.L1:
        return prox_l1(G, cfg.lam / 2.0)
    return prox_l21(G, cfg.lam / 2.0)


def update_V(state: FactorState, d0: int):
    if state.beta <= 0:
        raise ValueError("beta must be positive")
    return prox_nonneg_l0(state.Y + state.P / state.beta, d0)


def update_P(state: FactorState, cfg: SolverConfig):
    """Dual ascent step; returns ``(P, mu, beta)`` for the next iteration."""
    P = state.P + state.mu * (state.Y - state.V)
    mu = min(cfg.rho * state.mu, cfg.mu_max)
    beta = mu if cfg.beta is None else state.beta
    return P, mu, beta


def _finite(state: FactorState) -> bool:
    return all(np.all(np.isfinite(M)) for M in (state.X, state.Y, state.V, state.E, state.P))


def iterate(state: FactorState, Z, spec: SubspaceSpec, cfg: SolverConfig):
    """One full X, Y, E, V, P cycle, in place. Returns the rank-deficiency flag."""
    state.X, rank_deficient = update_X(state, Z, full_output=True)
    state.Y = update_Y(state, Z, cfg.y_update_rule)
    state.E = update_E(state, Z, cfg)
    state.V = update_V(state, spec.d0)
    state.P, state.mu, state.beta = update_P(state, cfg)
    return rank_deficient


def fit(Z, spec: SubspaceSpec = None, cfg: SolverConfig = None, state: FactorState = None,
        allow_negative: bool = False) -> FitResult:
    """Run the solver until the stopping test holds or ``max_iters`` is hit.

    The test is ``max|Z - XY| <= eps or max|Y - V| <= eps``, checked from the
    second iteration on.

    Parameters
    ----------
    Z : array_like or DataMatrix or Problem
        Nonnegative ``m x n`` data, samples in columns. A validated
        :class:`~mfc0.core.Problem` is used as is.
    spec : SubspaceSpec
    cfg : SolverConfig, optional
    state : FactorState, optional
        Starting point; defaults to :func:`init_state`.
    allow_negative : bool
        Accept data with negative entries.

    Raises
    ------
    NonFinite
        If any variable becomes NaN or Inf. The objective trace so far is
        attached to the exception.
    """
    problem = Z if isinstance(Z, Problem) else validate_problem(Z, spec, cfg, allow_negative)
    spec, cfg = problem.spec, problem.cfg
    Zv = problem.Z.values
    t0 = time.perf_counter()
    state = init_state(problem) if state is None else state.copy()

    trace = []
    converged = False
    rank_deficient_steps = 0
    eps = cfg.epsilon
    for it in range(1, cfg.max_iters + 1):
        with np.errstate(all="ignore"):
            rank_deficient_steps += iterate(state, Zv, spec, cfg)
        if not _finite(state):
            raise NonFinite(f"non-finite solver state at iteration {it}", trace=trace, iteration=it)
        R = Zv - state.X @ state.Y
        trace.append(_objective_from_residual(R, state.E, cfg.lam, cfg.error_norm))
        if it >= 2 and (np.max(np.abs(R)) <= eps or np.max(np.abs(state.Y - state.V)) <= eps):
            converged = True
            break

    if not converged:
        log.warning("stopped at max_iters=%d without meeting the stopping test", cfg.max_iters)
    if rank_deficient_steps:
        log.info("%d iterations had a rank-deficient X update", rank_deficient_steps)
    return FitResult(
        X=state.X, Y=state.Y, E=state.E, V=state.V,
        objective_trace=trace, iterations=len(trace),
        elapsed_seconds=time.perf_counter() - t0, converged=converged,
        rank_deficient_steps=rank_deficient_steps,
    )
