"""CSV/JSON reading and atomic, byte-reproducible writing."""

import csv
import json
import math
import os
import tempfile

import numpy as np

from .exceptions import InvalidInputError, ParseError


def format_float(x):
    """Shortest string that round-trips the 64-bit float ``x``."""
    x = float(x)
    if x == 0.0:
        return "0.0" if math.copysign(1.0, x) > 0 else "-0.0"
    return repr(x)


def _parse_cell(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def read_matrix_csv(path, expected_shape=None):
    """Read a rectangular numeric CSV; returns ``(matrix, labels)``.

    A first row containing any non-numeric cell is treated as a header and
    returned as ``labels`` (``None`` otherwise).
    """
    if not os.path.exists(path):
        raise InvalidInputError(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    labels = None
    first = [_parse_cell(c) for c in rows[0]]
    if any(v is None for v in first):
        labels = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header without data")
    width = len(labels) if labels is not None else len(rows[0])
    data = []
    offset = 2 if labels is not None else 1
    for i, row in enumerate(rows):
        line = i + offset
        if len(row) != width:
            raise ParseError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        vals = []
        for j, cell in enumerate(row):
            v = _parse_cell(cell)
            if v is None:
                raise ParseError(f"{path}: non-numeric cell {cell!r} at row {line}, column {j + 1}")
            vals.append(v)
        data.append(vals)
    mat = np.array(data, dtype=np.float64)
    if expected_shape is not None:
        want = tuple(expected_shape)
        if any(w is not None and w != g for w, g in zip(want, mat.shape)):
            raise InvalidInputError(f"{path}: shape {mat.shape} does not match expected {want}")
    return mat, labels


def load_signal_csv(path, expected_shape=None):
    """T x N signal from a CSV (node labels from an optional header are discarded)."""
    mat, _ = read_matrix_csv(path, expected_shape)
    if not np.all(np.isfinite(mat)):
        raise ParseError(f"{path}: non-finite values")
    return mat


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def matrix_to_csv(mat, header=None):
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in np.atleast_2d(mat):
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def write_matrix_csv(path, mat, header=None):
    _atomic_write(path, matrix_to_csv(mat, header))


def write_complex_csv(path, mat):
    """Interleaved ``re_j,im_j`` columns."""
    mat = np.atleast_2d(np.asarray(mat, dtype=np.complex128))
    out = np.empty((mat.shape[0], 2 * mat.shape[1]))
    out[:, 0::2] = mat.real
    out[:, 1::2] = mat.imag
    header = [f"{p}_{j}" for j in range(mat.shape[1]) for p in ("re", "im")]
    write_matrix_csv(path, out, header)


def write_records_csv(path, records, columns=None):
    """Dict rows to CSV; floats in shortest round-trip form."""
    if not records:
        raise InvalidInputError("no rows to write")
    columns = list(columns or records[0].keys())
    lines = [",".join(columns)]
    for r in records:
        cells = []
        for c in columns:
            v = r.get(c, "")
            cells.append(format_float(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    _atomic_write(path, dumps_json(obj))
