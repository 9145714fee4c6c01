"""Domain types, solver configuration and input validation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


class MFC0Error(Exception):
    """Base class for all errors raised by this package."""


class NegativeEntry(MFC0Error, ValueError):
    """The data matrix has a strictly negative entry."""


class DimensionMismatch(MFC0Error, ValueError):
    """Shapes are inconsistent, e.g. ``K * d0 > min(m, n)``."""


class BadConfig(MFC0Error, ValueError):
    """A configuration scalar is out of its admissible range."""


class NonFinite(MFC0Error, FloatingPointError):
    """A solver variable developed NaN or Inf.

    The partial objective trace is attached as ``trace``.
    """

    def __init__(self, message, trace=None, iteration=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.iteration = iteration


class ErrorNorm(str, enum.Enum):
    """Regularizer applied to the error matrix."""

    L1 = "l1"
    L21 = "l21"
    NONE = "none"


class YUpdateRule(str, enum.Enum):
    EXACT = "exact"
    PAPER = "paper"


def _as_enum(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).lower())
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise BadConfig(f"{value!r} is not one of: {choices}") from None


@dataclass(frozen=True)
class DataMatrix:
    """Observed samples, one per column (``m`` features by ``n`` samples).

    The stored array is a read-only float64 copy. Negative entries raise
    :class:`NegativeEntry` unless ``require_nonnegative`` is False.
    """

    values: np.ndarray
    require_nonnegative: bool = True

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"data must be a non-empty 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            i, j = np.argwhere(~np.isfinite(arr))[0]
            raise BadConfig(f"non-finite entry at row {i}, column {j}")
        if self.require_nonnegative and np.any(arr < 0):
            i, j = np.argwhere(arr < 0)[0]
            raise NegativeEntry(f"negative entry {arr[i, j]!r} at row {i}, column {j}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def shape(self):
        return self.values.shape

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SubspaceSpec:
    """``K`` subspaces of common dimension ``d0``."""

    K: int
    d0: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise BadConfig(f"K must be a positive integer, got {self.K!r}")
        if int(self.d0) != self.d0 or self.d0 < 1:
            raise BadConfig(f"d0 must be a positive integer, got {self.d0!r}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "d0", int(self.d0))

    @property
    def d(self) -> int:
        return self.K * self.d0


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the alternating-direction solver.

    Parameters
    ----------
    lam : float
        Weight of the error regularizer.
    error_norm : {"l1", "l21", "none"}
        Norm on the error matrix. ``"none"`` pins ``E`` to zero.
    mu0, rho, mu_max : float
        Multiplier step schedule ``mu <- min(rho * mu, mu_max)``.
    epsilon : float
        Tolerance of the stopping test.
    beta : float or None
        Quadratic penalty weight. ``None`` ties it to ``mu`` at every
        iteration; a float keeps it fixed.
    max_iters : int
    y_update_rule : {"exact", "paper"}
        ``"exact"`` solves the Y-subproblem exactly; ``"paper"`` uses the
        variant ``(1 + beta)^-1 (X^T (Z - E) + beta V - P)`` without the
        factor 2 on the fit term.
    seed : int
        Seed of the random basis initialization.
    """

    lam: float = 1.0
    error_norm: ErrorNorm = ErrorNorm.NONE
    mu0: float = 1e-3
    rho: float = 1.2
    mu_max: float = 1e3
    epsilon: float = 1e-4
    beta: Optional[float] = None
    max_iters: int = 1000
    y_update_rule: YUpdateRule = YUpdateRule.EXACT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "error_norm", _as_enum(ErrorNorm, self.error_norm))
        object.__setattr__(self, "y_update_rule", _as_enum(YUpdateRule, self.y_update_rule))
        checks = [
            (self.lam > 0, "lam must be > 0"),
            (self.mu0 > 0, "mu0 must be > 0"),
            (self.rho > 1, "rho must be > 1"),
            (self.mu_max >= self.mu0, "mu_max must be >= mu0"),
            (self.epsilon > 0, "epsilon must be > 0"),
            (self.beta is None or self.beta > 0, "fixed beta must be > 0"),
            (int(self.max_iters) == self.max_iters and self.max_iters >= 1,
             "max_iters must be a positive integer"),
        ]
        for ok, msg in checks:
            if not ok:
                raise BadConfig(msg)
        for name in ("lam", "mu0", "rho", "mu_max", "epsilon"):
            if not np.isfinite(getattr(self, name)):
                raise BadConfig(f"{name} must be finite")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def beta_tied(self) -> bool:
        return self.beta is None

    def as_dict(self) -> dict:
        return {
            "lam": self.lam,
            "error_norm": self.error_norm.value,
            "mu0": self.mu0,
            "rho": self.rho,
            "mu_max": self.mu_max,
            "epsilon": self.epsilon,
            "beta": "tied" if self.beta is None else self.beta,
            "max_iters": self.max_iters,
            "y_update_rule": self.y_update_rule.value,
            "seed": self.seed,
        }


@dataclass
class FactorState:
    """Live variables of one solver run.

    ``X`` is the ``m x d`` basis, ``Y`` the ``d x n`` representation, ``V``
    its sparse nonnegative copy, ``E`` the error and ``P`` the multiplier.
    """

    X: np.ndarray
    Y: np.ndarray
    V: np.ndarray
    E: np.ndarray
    P: np.ndarray
    mu: float
    beta: float

    def copy(self) -> "FactorState":
        return FactorState(self.X.copy(), self.Y.copy(), self.V.copy(), self.E.copy(),
                           self.P.copy(), self.mu, self.beta)


@dataclass
class FitResult:
    X: np.ndarray
    Y: np.ndarray
    E: np.ndarray
    objective_trace: List = field(default_factory=list)
    iterations: int = 0
    elapsed_seconds: float = 0.0
    converged: bool = False
    V: Optional[np.ndarray] = None
    rank_deficient_steps: int = 0

    @property
    def totals(self) -> np.ndarray:
        return np.array([o.total for o in self.objective_trace])

    @property
    def final_objective(self):
        return self.objective_trace[-1] if self.objective_trace else None


@dataclass(frozen=True)
class Problem:
    """A validated ``(Z, spec, cfg)`` triple, ready for :func:`mfc0.solver.fit`."""

    Z: DataMatrix
    spec: SubspaceSpec
    cfg: SolverConfig

    @property
    def m(self) -> int:
        return self.Z.m

    @property
    def n(self) -> int:
        return self.Z.n


def validate_problem(Z, spec: SubspaceSpec, cfg: Optional[SolverConfig] = None,
                     allow_negative: bool = False) -> Problem:
    """Check every input invariant and return a :class:`Problem` handle.

    ``allow_negative`` lifts the nonnegativity requirement on ``Z``; the
    solver itself never relies on it.

    Raises
    ------
    NegativeEntry
        ``Z`` has a negative entry.
    DimensionMismatch
        ``K * d0`` exceeds ``min(m, n)`` or ``Z`` is not a matrix.
    BadConfig
        Any configuration scalar is out of range, or ``Z`` is not finite.
    """
    if cfg is None:
        cfg = SolverConfig()
    if not isinstance(cfg, SolverConfig):
        raise BadConfig(f"expected SolverConfig, got {type(cfg).__name__}")
    if not isinstance(spec, SubspaceSpec):
        raise BadConfig(f"expected SubspaceSpec, got {type(spec).__name__}")
    if isinstance(Z, DataMatrix) and Z.require_nonnegative == allow_negative:
        Z = Z.values
    if not isinstance(Z, DataMatrix):
        try:
            Z = DataMatrix(Z, require_nonnegative=not allow_negative)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, MFC0Error):
                raise
            raise BadConfig(f"data is not a numeric matrix: {exc}") from exc
    if spec.d > min(Z.m, Z.n):
        raise DimensionMismatch(
            f"K*d0 = {spec.d} exceeds min(m, n) = {min(Z.m, Z.n)} for data of shape {Z.shape}"
        )
    return Problem(Z, spec, cfg)
