"""Robust multi-subspace analysis by column-l0 constrained matrix factorization."""

from .core import (
    BadConfig,
    DataMatrix,
    DimensionMismatch,
    ErrorNorm,
    FactorState,
    FitResult,
    MFC0Error,
    NegativeEntry,
    NonFinite,
    Problem,
    SolverConfig,
    SubspaceSpec,
    YUpdateRule,
    validate_problem,
)
from .operators import procrustes, prox_l1, prox_l21, prox_nonneg_l0
from .solver import fit, init_state, objective

__version__ = "0.1.0"
