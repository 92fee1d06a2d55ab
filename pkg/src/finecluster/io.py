"""Binary dataset, label and assignment files.

All integers and floats are little-endian.

=========== ==========================================================
file        layout
=========== ==========================================================
dataset     ``b"FCDS"``, u32 version (=1), u64 n, u64 d, n*d float64
labels      ``b"FCLB"``, u64 n, n int32 (-1 = outlier)
assignments ``b"FCAS"``, u64 n, n int32 set ids (-1 = unassigned)
=========== ==========================================================

Datasets may also be read from CSV (one point per row, no header).
"""
import struct
from pathlib import Path

import numpy as np

DATASET_MAGIC = b"FCDS"
LABELS_MAGIC = b"FCLB"
ASSIGN_MAGIC = b"FCAS"
DATASET_VERSION = 1


class FormatError(ValueError):
    pass


def write_dataset(path, X):
    X = np.ascontiguousarray(X, dtype="<f8")
    if X.ndim != 2:
        raise ValueError("dataset must be a 2-d array")
    n, d = X.shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IQQ", DATASET_VERSION, n, d))
        fh.write(X.tobytes(order="C"))


def read_dataset(path):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        X = np.loadtxt(path, delimiter=",", ndmin=2)
        return np.ascontiguousarray(X, dtype=np.float64)
    raw = path.read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, n, d = struct.unpack_from("<IQQ", raw, 4)
    if version != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[24:]
    if len(body) != 8 * n * d:
        raise FormatError(f"{path}: expected {8 * n * d} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)


def _write_int_file(path, magic, values):
    values = np.ascontiguousarray(values, dtype="<i4")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", values.size))
        fh.write(values.tobytes())


def _read_int_file(path, magic):
    raw = Path(path).read_bytes()
    if raw[:4] != magic:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    (n,) = struct.unpack_from("<Q", raw, 4)
    body = raw[12:]
    if len(body) != 4 * n:
        raise FormatError(f"{path}: expected {4 * n} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<i4").astype(np.int64)


def write_labels(path, labels):
    _write_int_file(path, LABELS_MAGIC, labels)


def read_labels(path):
    return _read_int_file(path, LABELS_MAGIC)


def write_assignments(path, assignment):
    _write_int_file(path, ASSIGN_MAGIC, assignment)


def read_assignments(path):
    return _read_int_file(path, ASSIGN_MAGIC)


def sets_to_assignment(sets, n):
    out = np.full(n, -1, dtype=np.int64)
    for j, idx in enumerate(sets):
        out[np.asarray(idx, dtype=np.int64)] = j
    return out


def assignment_to_sets(assignment):
    assignment = np.asarray(assignment)
    m = int(assignment.max()) + 1 if assignment.size and assignment.max() >= 0 else 0
    return [np.flatnonzero(assignment == j) for j in range(m)]
