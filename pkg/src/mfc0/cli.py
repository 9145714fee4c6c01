"""Command-line entry point: ``mfc0 {fit,cluster,synth,sweep,timing}``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .bench import (
    SWEEP_FIELDS,
    ErrorKind,
    SynthConfig,
    corrupt,
    gen_subspaces,
    gen_toy3d,
    summarize_sweep,
    sweep_error_ratio,
    timing_profile,
    write_rows,
)
from .clustering import cluster, extract_bases, off_block_mass
from .core import MFC0Error, NonFinite, SolverConfig, SubspaceSpec, validate_problem
from .io import (
    git_blob_hash,
    read_labels,
    read_matrix,
    utc_now,
    write_labels,
    write_manifest,
    write_matrix,
    write_pgm,
)
from .solver import fit

log = logging.getLogger("mfc0")

EXIT_USAGE = 2
EXIT_NUMERIC = 3


def parse_ratios(text):
    """``"0:0.8:0.1"`` (inclusive range) or ``"0,0.3,0.6"``."""
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("ratio step must be positive")
        vals = np.arange(start, stop + step / 2, step)
        return [float(v) for v in np.round(vals, 10)]
    return [float(t) for t in text.split(",") if t.strip()]


def parse_int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _add_solver_args(p):
    p.add_argument("--input", required=True, help="data matrix CSV, samples in columns")
    p.add_argument("--k", type=int, required=True, help="number of subspaces")
    p.add_argument("--d0", type=int, required=True, help="dimension of each subspace")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--error-norm", choices=["l1", "l21", "none"], default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--y-update", choices=["paper", "exact"], default="exact")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--beta", type=float, default=None,
                   help="fixed penalty weight (default: tied to the step size)")
    p.add_argument("--shift-min", action="store_true",
                   help="subtract the global minimum from the data when it is negative")
    p.add_argument("--allow-negative", action="store_true",
                   help="accept data with negative entries as is")
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="mfc0", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="factorize a data matrix")
    _add_solver_args(p)

    p = sub.add_parser("cluster", help="factorize, then cluster samples and extract bases")
    _add_solver_args(p)
    p.add_argument("--truth", help="ground-truth labels CSV")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--preset", choices=["toy3d", "highdim"], default="highdim")
    p.add_argument("--error-kind", choices=[e.value for e in ErrorKind], default="none")
    p.add_argument("--ratio", type=float, default=0.0)
    p.add_argument("--magnitude", type=float, default=None)
    p.add_argument("--nonneg", choices=["none", "shift"], default="none",
                   help="highdim only: leave signs as generated or shift by the minimum")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="clustering accuracy against error ratio")
    p.add_argument("--kind", choices=["corruption", "outlier"], required=True)
    p.add_argument("--ratios", type=parse_ratios, default=parse_ratios("0:0.8:0.1"))
    p.add_argument("--methods", default="mfc0,pca,nmf")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("timing", help="per-iteration time against sample count")
    p.add_argument("--n", type=parse_int_list, default=[250, 500, 1000, 2000])
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--d0", type=int, default=10)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    return parser


def _manifest_base(args, **extra):
    entries = {"command": args.command, "version": __version__, "started_utc": utc_now()}
    for key, value in sorted(vars(args).items()):
        if key in ("command", "verbose"):
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        entries[f"arg.{key}"] = value
    entries.update(extra)
    return entries


def _load_problem(args):
    Z = read_matrix(args.input)
    shift = 0.0
    if args.shift_min and Z.min() < 0:
        shift = -float(Z.min())
        Z = Z + shift
    spec = SubspaceSpec(args.k, args.d0)
    cfg = SolverConfig(lam=args.lam, error_norm=args.error_norm, seed=args.seed,
                       y_update_rule=args.y_update, max_iters=args.max_iters, beta=args.beta)
    problem = validate_problem(Z, spec, cfg, allow_negative=args.allow_negative)
    return problem, shift


def _write_fit(out, res):
    write_matrix(os.path.join(out, "X.csv"), res.X, "basis, one column per basis vector")
    write_matrix(os.path.join(out, "Y.csv"), res.Y, "representation, samples are columns")
    write_matrix(os.path.join(out, "E.csv"), res.E, "error, samples are columns")
    with open(os.path.join(out, "objective.csv"), "w") as fh:
        fh.write("iter,total,fit,reg\n")
        for i, o in enumerate(res.objective_trace, start=1):
            fh.write(f"{i},{o.total!r},{o.fit_term!r},{o.reg_term!r}\n")


def _fit_manifest(args, problem, shift, res):
    cfg = problem.cfg
    extra = {f"config.{k}": v for k, v in cfg.as_dict().items()}
    extra.update({
        "config.K": problem.spec.K, "config.d0": problem.spec.d0,
        "input_hash": git_blob_hash(args.input), "input_shape": f"{problem.m}x{problem.n}",
        "preprocess_shift": repr(shift),
        "converged": str(res.converged).lower(), "iterations": res.iterations,
        "final_objective": repr(res.objective_trace[-1].total),
    })
    return extra


def cmd_fit(args):
    problem, shift = _load_problem(args)
    started = utc_now()
    res = fit(problem)
    os.makedirs(args.out, exist_ok=True)
    _write_fit(args.out, res)
    entries = _manifest_base(args, **_fit_manifest(args, problem, shift, res))
    entries.update(started_utc=started, finished_utc=utc_now())
    write_manifest(args.out, entries)
    print(f"converged={str(res.converged).lower()} iterations={res.iterations} "
          f"objective={res.objective_trace[-1].total:.6g}")


def cmd_cluster(args):
    problem, shift = _load_problem(args)
    truth = None
    if args.truth:
        truth = read_labels(args.truth)
        if truth.size != problem.n:
            raise MFC0Error(f"{truth.size} truth labels for {problem.n} samples")
    started = utc_now()
    res = fit(problem)
    K = problem.spec.K
    cr = cluster(res.Y, K, truth=truth, seed=args.seed)
    out = args.out
    os.makedirs(os.path.join(out, "bases"), exist_ok=True)
    _write_fit(out, res)
    write_labels(os.path.join(out, "labels.csv"), cr.labels)
    block = res.Y[np.ix_(cr.row_permutation, cr.permutation)]
    write_pgm(os.path.join(out, "Y_block.pgm"), block)
    for k, B in enumerate(extract_bases(res.X, cr.row_assignment, K, problem.spec.d0)):
        write_matrix(os.path.join(out, "bases", f"basis_{k}.csv"), B, f"basis of subspace {k}")
    obm = off_block_mass(res.Y, cr.labels, cr.row_assignment)
    report = [f"converged={str(res.converged).lower()}", f"iterations={res.iterations}",
              f"off_block_mass={obm:.6e}"]
    if truth is not None:
        with open(os.path.join(out, "accuracy.txt"), "w") as fh:
            fh.write(f"{cr.accuracy:.3f}\n")
        report.append(f"accuracy={cr.accuracy:.3f}")
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(report) + "\n")
    entries = _manifest_base(args, **_fit_manifest(args, problem, shift, res))
    if args.truth:
        entries["truth_hash"] = git_blob_hash(args.truth)
    entries.update(off_block_mass=repr(obm), started_utc=started, finished_utc=utc_now())
    write_manifest(out, entries)
    print("\n".join(report))


def cmd_synth(args):
    if not 0.0 <= args.ratio <= 1.0:
        raise MFC0Error("--ratio must lie in [0, 1]")
    if args.preset == "toy3d":
        ds = gen_toy3d(args.seed)
        if args.error_kind != "none" and args.ratio > 0:
            ds = corrupt(ds, args.error_kind, args.ratio, args.magnitude, seed=(args.seed, 1))
    else:
        ds = gen_subspaces(SynthConfig(seed=args.seed, error_kind=args.error_kind,
                                       error_ratio=args.ratio, error_magnitude=args.magnitude,
                                       nonneg=args.nonneg))
    mask = ds.error_mask if ds.error_mask is not None else np.zeros(ds.Z.shape, dtype=bool)
    os.makedirs(args.out, exist_ok=True)
    write_matrix(os.path.join(args.out, "Z.csv"), ds.Z)
    write_matrix(os.path.join(args.out, "clean.csv"), ds.clean)
    write_matrix(os.path.join(args.out, "mask.csv"), mask.astype(int), "1 marks an injected error")
    write_labels(os.path.join(args.out, "labels.csv"), ds.truth)
    entries = _manifest_base(args, shape=f"{ds.Z.shape[0]}x{ds.Z.shape[1]}",
                             **{f"info.{k}": v for k, v in sorted(ds.info.items())})
    entries["finished_utc"] = utc_now()
    write_manifest(args.out, entries)
    print(f"wrote {ds.Z.shape[0]}x{ds.Z.shape[1]} matrix to {args.out}")


def cmd_sweep(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = set(methods) - {"mfc0", "pca", "nmf"}
    if unknown:
        raise MFC0Error(f"unknown methods: {', '.join(sorted(unknown))}")
    if args.seeds < 1:
        raise MFC0Error("--seeds must be positive")
    rows = sweep_error_ratio(args.ratios, kinds=[args.kind], seeds=args.seeds, methods=methods,
                             lam={args.kind: args.lam}, master_seed=args.master_seed)
    rows.sort(key=lambda r: (r["kind"], r["ratio"], r["method"], r["seed"]))
    os.makedirs(args.out, exist_ok=True)
    write_rows(os.path.join(args.out, "sweep.csv"), rows, SWEEP_FIELDS)
    means = summarize_sweep(rows)
    write_rows(os.path.join(args.out, "sweep_mean.csv"), means,
               ("kind", "ratio", "method", "mean_acc", "runs"))
    entries = _manifest_base(args, rows=len(rows), finished_utc=utc_now())
    write_manifest(args.out, entries)
    for r in means:
        print(f"{r['kind']:>10} {r['ratio']:.2f} {r['method']:>5} {r['mean_acc']:.3f}")


def cmd_timing(args):
    rows, summary = timing_profile(args.n, m=args.m, K=args.k, d0=args.d0, seed=args.seed,
                                   repeats=args.repeats)
    os.makedirs(args.out, exist_ok=True)
    write_rows(os.path.join(args.out, "timing.csv"), rows, ("n", "iters", "total_s", "per_iter_s"))
    with open(os.path.join(args.out, "timing_fit.txt"), "w") as fh:
        for key, value in summary.items():
            fh.write(f"{key}={value!r}\n")
    write_manifest(args.out, _manifest_base(args, finished_utc=utc_now()))
    for r in rows:
        print(f"n={r['n']:>6} iters={r['iters']:>4} per_iter_s={r['per_iter_s']:.3e}")
    print(f"r2={summary['r2']:.4f} max_step_ratio={summary['max_step_ratio']:.3f}")


COMMANDS = {"fit": cmd_fit, "cluster": cmd_cluster, "synth": cmd_synth,
            "sweep": cmd_sweep, "timing": cmd_timing}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except NonFinite as exc:
        print(f"mfc0: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MFC0Error, ValueError, OSError) as exc:
        print(f"mfc0: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
