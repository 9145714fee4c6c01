"""Synthetic union-of-subspaces data, error injection and experiment sweeps."""

from __future__ import annotations

import csv
import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import orth

from .baselines import baseline_cluster, nmf_fit, pca_fit
from .clustering import accuracy, cluster
from .core import ErrorNorm, MFC0Error, SolverConfig, SubspaceSpec
from .solver import fit

log = logging.getLogger(__name__)

TOY3D_DIRECTIONS = np.array([
    [0.0, 1.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
]) / np.sqrt(2.0)


class ErrorKind(str, enum.Enum):
    NONE = "none"
    CORRUPTION = "corruption"
    OUTLIER = "outlier"


MATCHED_NORM = {
    ErrorKind.NONE: ErrorNorm.NONE,
    ErrorKind.CORRUPTION: ErrorNorm.L1,
    ErrorKind.OUTLIER: ErrorNorm.L21,
}

# entries hit inside each corrupted column
CORRUPTED_ENTRY_FRACTION = 0.1


@dataclass(frozen=True)
class SynthConfig:
    K: int = 5
    d0: int = 10
    D: int = 100
    n_k: int = 100
    seed: int = 0
    error_kind: ErrorKind = ErrorKind.NONE
    error_ratio: float = 0.0
    error_magnitude: Optional[float] = None
    nonneg: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "error_kind", ErrorKind(self.error_kind))
        if self.K * self.d0 > self.D:
            raise ValueError(f"K*d0 = {self.K * self.d0} exceeds ambient dimension {self.D}")
        if not 0.0 <= self.error_ratio <= 1.0:
            raise ValueError("error_ratio must lie in [0, 1]")
        if self.error_magnitude is not None and self.error_magnitude <= 0:
            raise ValueError("error_magnitude must be positive")
        if self.nonneg not in ("shift", "none"):
            raise ValueError("nonneg must be 'shift' or 'none'")


@dataclass
class LabeledDataset:
    Z: np.ndarray
    truth: np.ndarray
    clean: Optional[np.ndarray] = None
    error_mask: Optional[np.ndarray] = None
    bases: Optional[List[np.ndarray]] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.truth) != self.Z.shape[1]:
            raise ValueError("truth length must equal the number of columns of Z")

    @property
    def K(self) -> int:
        return int(np.max(self.truth)) + 1


def gen_subspaces(cfg: SynthConfig = SynthConfig()) -> LabeledDataset:
    """Samples from ``K`` independent ``d0``-dimensional subspaces of ``R^D``.

    A random orthonormal ``T`` chains the bases, ``U_{k+1} = T U_k``, from a
    random column-orthonormal ``U_1``; class ``k`` is ``U_k R_k`` with
    ``R_k ~ Uniform[0, 1]``. The chained bases have mixed signs, so ``Z``
    generally has negative entries; ``nonneg="shift"`` subtracts the global
    minimum, at the price of adding a direction shared by every class (the
    classes then no longer lie in independent ``d0``-dimensional subspaces).
    Errors from ``cfg`` are injected afterwards.
    """
    rng = np.random.default_rng(cfg.seed)
    T = orth(rng.random((cfg.D, cfg.D)))
    U = orth(rng.random((cfg.D, cfg.d0)))
    blocks, bases = [], []
    for _ in range(cfg.K):
        bases.append(U)
        blocks.append(U @ rng.random((cfg.d0, cfg.n_k)))
        U = T @ U
    Z = np.hstack(blocks)
    shift = 0.0
    if cfg.nonneg == "shift" and Z.min() < 0:
        shift = -float(Z.min())
        Z = Z + shift
    truth = np.repeat(np.arange(cfg.K), cfg.n_k)
    ds = LabeledDataset(Z=Z, truth=truth, clean=Z.copy(), bases=bases,
                        info={"generator": "subspaces", "shift": shift, **_cfg_info(cfg)})
    if cfg.error_kind is not ErrorKind.NONE and cfg.error_ratio > 0:
        ds = corrupt(ds, cfg.error_kind, cfg.error_ratio, cfg.error_magnitude,
                     seed=(cfg.seed, 1))
    return ds


def _cfg_info(cfg: SynthConfig) -> dict:
    return {"K": cfg.K, "d0": cfg.d0, "D": cfg.D, "n_k": cfg.n_k, "seed": cfg.seed,
            "nonneg": cfg.nonneg}


def gen_toy3d(seed=0, n_per=50) -> LabeledDataset:
    """Three lines through the origin of ``R^3`` with nonnegative coefficients."""
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(0.1, 1.0, size=(3, n_per))
    Z = np.hstack([np.outer(TOY3D_DIRECTIONS[k], coeffs[k]) for k in range(3)])
    truth = np.repeat(np.arange(3), n_per)
    return LabeledDataset(Z=Z, truth=truth, clean=Z.copy(),
                          bases=[u[:, None] for u in TOY3D_DIRECTIONS],
                          info={"generator": "toy3d", "seed": seed, "n_per": n_per})


def corrupt(ds: LabeledDataset, error_kind, ratio, magnitude=None, seed=0) -> LabeledDataset:
    """Inject errors into a ``ratio`` share of the columns.

    ``"corruption"`` adds ``Uniform[0, magnitude]`` noise to 10% of the
    entries of each chosen column (``magnitude`` defaults to the largest data
    entry). ``"outlier"`` adds to each chosen column a random nonnegative
    vector whose norm is ``magnitude`` (default 1) times the mean clean
    column norm, pushing the sample off its subspace while keeping it a
    sample of that subspace plus a column error. Unchosen entries are left
    untouched.
    """
    error_kind = ErrorKind(error_kind)
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    clean = ds.clean if ds.clean is not None else ds.Z
    Z = ds.Z.copy()
    m, n = Z.shape
    mask = np.zeros((m, n), dtype=bool) if ds.error_mask is None else ds.error_mask.copy()
    info = dict(ds.info)
    n_bad = int(round(ratio * n))
    if error_kind is ErrorKind.NONE or n_bad == 0:
        return replace(ds, Z=Z, error_mask=mask, clean=clean.copy(), info=info)

    rng = np.random.default_rng(np.random.SeedSequence(seed if np.ndim(seed) else [seed]))
    cols = np.sort(rng.choice(n, size=n_bad, replace=False))
    if error_kind is ErrorKind.CORRUPTION:
        if magnitude is None:
            magnitude = float(clean.max())
        n_entries = max(1, int(np.ceil(CORRUPTED_ENTRY_FRACTION * m)))
        for j in cols:
            rows = rng.choice(m, size=n_entries, replace=False)
            Z[rows, j] += rng.uniform(0.0, magnitude, size=n_entries)
            mask[rows, j] = True
    else:
        if magnitude is None:
            magnitude = 1.0
        target = magnitude * float(np.linalg.norm(clean, axis=0).mean())
        for j in cols:
            v = rng.random(m)
            Z[:, j] += v * (target / np.linalg.norm(v))
            mask[:, j] = True
    info.update(error_kind=error_kind.value, error_ratio=ratio, error_magnitude=magnitude,
                corrupted_entry_fraction=CORRUPTED_ENTRY_FRACTION)
    return replace(ds, Z=Z, clean=clean.copy(), error_mask=mask, info=info)


def estimate_d0(Z_class, tau=0.05) -> int:
    """Number of singular values at least ``tau`` times the largest one."""
    s = np.linalg.svd(np.asarray(Z_class, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s >= tau * s[0]))


def estimate_d0_classes(Z, labels, tau=0.05):
    """Per-class estimates and their median (rounded to an integer)."""
    labels = np.asarray(labels)
    per_class = [estimate_d0(Z[:, labels == k], tau) for k in np.unique(labels)]
    return int(round(float(np.median(per_class)))), per_class


# -- sweeps -------------------------------------------------------------------

SWEEP_FIELDS = ("kind", "ratio", "method", "seed", "acc", "iters", "seconds")

DEFAULT_LAMBDA = {ErrorKind.NONE: 1.0, ErrorKind.CORRUPTION: 1.0, ErrorKind.OUTLIER: 1.0}


def cell_seed(master_seed, *key) -> int:
    return int(np.random.SeedSequence([int(master_seed), *map(int, key)]).generate_state(1)[0])


def run_method(method, ds: LabeledDataset, spec: SubspaceSpec, cfg: SolverConfig, seed=0):
    """Cluster ``ds`` with one method; returns ``(acc, iters, seconds)``."""
    t0 = time.perf_counter()
    if method == "mfc0":
        res = fit(ds.Z, spec, replace(cfg, seed=seed), allow_negative=True)
        labels = cluster(res.Y, spec.K, seed=seed).labels
        iters = res.iterations
    elif method == "pca":
        labels = baseline_cluster(pca_fit(ds.Z), spec.K, seed=seed)
        iters = 0
    elif method == "nmf":
        # NMF needs nonnegative input; shift data that has negative entries
        Z = ds.Z - min(0.0, float(ds.Z.min()))
        model = nmf_fit(Z, spec.d, seed=seed)
        labels = baseline_cluster(model, spec.K, seed=seed)
        iters = len(model.objective_trace) - 1
    else:
        raise ValueError(f"unknown method {method!r}")
    return accuracy(labels, ds.truth), iters, time.perf_counter() - t0


def sweep_error_ratio(grid: Sequence[float], kinds=("corruption", "outlier"), seeds=3,
                      methods=("mfc0", "pca", "nmf"), synth: SynthConfig = SynthConfig(),
                      lam=None, master_seed=0, solver_cfg: Optional[SolverConfig] = None):
    """Clustering accuracy against error ratio for each kind and method.

    Every ``(kind, ratio, seed)`` cell generates its own dataset from a seed
    derived from ``master_seed``; all methods see the same data. MFC0 uses
    the error norm matched to the error kind. A failing cell is recorded
    with ``acc = nan`` and the sweep continues.

    Returns a list of row dicts keyed by :data:`SWEEP_FIELDS`.
    """
    grid = [float(r) for r in grid]
    if any(not 0.0 <= r <= 1.0 for r in grid):
        raise ValueError("ratios must lie in [0, 1]")
    lam = dict(DEFAULT_LAMBDA, **{ErrorKind(k): v for k, v in (lam or {}).items()})
    base_cfg = solver_cfg or SolverConfig()
    spec = SubspaceSpec(synth.K, synth.d0)
    rows = []
    for ki, kind in enumerate(ErrorKind(k) for k in kinds):
        cfg = replace(base_cfg, error_norm=MATCHED_NORM[kind], lam=lam[kind])
        for ri, ratio in enumerate(grid):
            for s in range(seeds):
                dseed = cell_seed(master_seed, ki, ri, s)
                ds = gen_subspaces(replace(synth, seed=dseed, error_kind=kind, error_ratio=ratio))
                for method in methods:
                    try:
                        acc, iters, secs = run_method(method, ds, spec, cfg, seed=dseed)
                    except (MFC0Error, np.linalg.LinAlgError, ValueError) as exc:
                        log.warning("cell (%s, %g, %s, %d) failed: %s", kind.value, ratio,
                                    method, s, exc)
                        acc, iters, secs = float("nan"), 0, 0.0
                    rows.append({"kind": kind.value, "ratio": ratio, "method": method,
                                 "seed": s, "acc": acc, "iters": iters, "seconds": secs})
    return rows


def summarize_sweep(rows):
    """Mean accuracy per ``(kind, ratio, method)``, NaN cells ignored."""
    groups = {}
    for r in rows:
        groups.setdefault((r["kind"], r["ratio"], r["method"]), []).append(r["acc"])
    out = []
    for (kind, ratio, method), accs in sorted(groups.items()):
        accs = np.asarray(accs, dtype=float)
        mean = float(np.nanmean(accs)) if np.any(np.isfinite(accs)) else float("nan")
        out.append({"kind": kind, "ratio": ratio, "method": method, "mean_acc": mean,
                    "runs": int(np.isfinite(accs).sum())})
    return out


def write_rows(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in fields})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# -- timing -------------------------------------------------------------------

def linear_fit_r2(x, y):
    """Least-squares line through ``(x, y)``; returns ``(slope, intercept, r2)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def timing_profile(n_grid=(250, 500, 1000, 2000), m=100, K=5, d0=10, seed=0,
                   iters=30, repeats=3, solver_cfg: Optional[SolverConfig] = None):
    """Per-iteration wall time of the solver as the sample count grows.

    Each ``n`` runs a fixed ``iters`` iterations (the stopping test is not
    allowed to end the run early) ``repeats`` times and keeps the fastest.
    A separate default-configuration run gives the iterations to converge.

    Returns ``(rows, summary)`` where rows hold ``n, iters, total_s,
    per_iter_s`` and the summary holds the linear fit of ``per_iter_s``
    against ``n``.
    """
    n_grid = [int(n) for n in n_grid]
    if sorted(n_grid) != n_grid:
        raise ValueError("n_grid must be ascending")
    spec = SubspaceSpec(K, d0)
    base = solver_cfg or SolverConfig()
    rows = []
    for n in n_grid:
        n_k = max(1, n // K)
        ds = gen_subspaces(SynthConfig(K=K, d0=d0, D=m, n_k=n_k, seed=seed))
        conv = fit(ds.Z, spec, replace(base, seed=seed), allow_negative=True)
        # epsilon tiny so the stopping test never fires during the timed runs
        timed_cfg = replace(base, seed=seed, max_iters=iters, epsilon=1e-300)
        best = np.inf
        solver_log = logging.getLogger("mfc0.solver")
        level = solver_log.level
        solver_log.setLevel(logging.ERROR)  # hitting max_iters is intended here
        try:
            for _ in range(repeats):
                res = fit(ds.Z, spec, timed_cfg, allow_negative=True)
                best = min(best, res.elapsed_seconds / res.iterations)
        finally:
            solver_log.setLevel(level)
        rows.append({"n": ds.Z.shape[1], "iters": conv.iterations,
                     "total_s": conv.elapsed_seconds, "per_iter_s": best})
    slope, intercept, r2 = linear_fit_r2([r["n"] for r in rows], [r["per_iter_s"] for r in rows])
    ratios = [b["per_iter_s"] / a["per_iter_s"] for a, b in zip(rows, rows[1:])]
    summary = {"slope_s_per_sample": slope, "intercept_s": intercept, "r2": r2,
               "max_step_ratio": max(ratios) if ratios else float("nan")}
    return rows, summary
