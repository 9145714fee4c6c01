"""Plain-text artifacts: matrix CSV, label files, PGM heatmaps, run manifests.

Matrix CSV files have no header, one matrix row per line, comma separated
values with 17 significant digits, and samples in columns. Lines starting
with ``#`` are comments.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import os

import numpy as np

from .core import MFC0Error


class ParseError(MFC0Error, ValueError):
    pass


def read_matrix(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            row = []
            for col, field in enumerate(fields, start=1):
                try:
                    row.append(float(field))
                except ValueError:
                    raise ParseError(f"{path}: row {len(rows) + 1} (line {lineno}), column {col}: "
                                     f"cannot parse {field.strip()!r} as a number") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}: row {len(rows) + 1} (line {lineno}) has {len(row)} "
                                 f"columns, expected {width}")
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def write_matrix(path, M, banner="samples are columns"):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"# {banner}; shape {M.shape[0]}x{M.shape[1]}\n")
        for row in M:
            fh.write(",".join(format(float(v), ".17g") for v in row))
            fh.write("\n")


def read_labels(path) -> np.ndarray:
    """Integer labels, one per line, or comma separated on one or more lines."""
    M = read_matrix(path).ravel()
    if not np.all(M == np.round(M)):
        raise ParseError(f"{path}: labels must be integers")
    return M.astype(int)


def write_labels(path, labels):
    with open(path, "w") as fh:
        fh.write("# one label per sample\n")
        for v in np.asarray(labels).ravel():
            fh.write(f"{int(v)}\n")


def write_pgm(path, M):
    """Plain (P2) 8-bit PGM; gray level is linear in ``|M|`` over ``[0, max|M|]``."""
    A = np.abs(np.atleast_2d(np.asarray(M, dtype=np.float64)))
    top = A.max() if A.size else 0.0
    levels = np.zeros(A.shape, dtype=int) if top == 0 else np.rint(255.0 * A / top).astype(int)
    h, w = levels.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n# |values| scaled to [0, {top!r}]\n{w} {h}\n255\n")
        for row in levels:
            fh.write(" ".join(str(v) for v in row))
            fh.write("\n")


def read_pgm(path) -> np.ndarray:
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if tokens[0] != "P2":
        raise ParseError(f"{path}: not a plain PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4:4 + w * h], dtype=int).reshape(h, w)


def git_blob_hash(path) -> str:
    """SHA-1 of the file as git would hash it as a blob."""
    with open(path, "rb") as fh:
        data = fh.read()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_manifest(out_dir, entries: dict, name="manifest.txt"):
    with open(os.path.join(out_dir, name), "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and not line.startswith("#") and "=" in line:
                key, value = line.split("=", 1)
                out[key] = value
    return out
