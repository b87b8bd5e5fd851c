"""CSV ingestion and the spatial Durbin design expansion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .sampler import ModelData
from .spatial import build_knn_weights, read_coordinates, read_weights, spatial_lag

__all__ = ["IngestOptions", "read_numeric_csv", "ingest_csv", "expand_durbin", "write_numeric_csv"]

ID_COLUMNS = ("id",)
INTERCEPT_NAMES = ("intercept", "const", "constant", "(intercept)")


@dataclass(frozen=True)
class IngestOptions:
    knn: int = 5
    durbin: bool = False


def read_numeric_csv(path):
    """Read a headed numeric CSV; an ``id`` column is returned separately.

    Returns ``(names, values, ids)`` where ``ids`` is ``None`` when there is
    no id column.  Rows are numbered from 1 after the header in error messages.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValidationError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}: duplicate column names in header")
        id_pos = [j for j, h in enumerate(header) if h.lower() in ID_COLUMNS]
        keep = [j for j in range(len(header)) if j not in id_pos]
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}"
                )
            vals = []
            for j in keep:
                cell = row[j].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: row {lineno}, column {header[j]!r}: cannot parse {cell!r} as a number"
                    ) from None
            rows.append(vals)
            if id_pos:
                ids.append(row[id_pos[0]].strip())
    names = [header[j] for j in keep]
    values = np.array(rows, dtype=float).reshape(len(rows), len(names))
    if not np.all(np.isfinite(values)):
        i, j = np.argwhere(~np.isfinite(values))[0]
        raise ValidationError(f"{path}: row {i + 1}, column {names[j]!r}: value is not finite")
    return names, values, (ids if id_pos else None)


def write_numeric_csv(path, names, values, ids=None):
    """Write columns with ``repr`` floats so that reading back is bit-exact."""
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[:, None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow((["id"] if ids is not None else []) + list(names))
        for i, row in enumerate(values):
            lead = [ids[i]] if ids is not None else []
            out.writerow(lead + [repr(float(v)) for v in row])


def _check_ids(a, b, what):
    if a is not None and b is not None and list(a) != list(b):
        raise ValidationError(f"observation ids in {what} do not match the response file")


def ingest_csv(y_path, x_path, coords_or_w_path, options=None):
    """Load response, covariates and neighborhood structure into ``ModelData``.

    ``coords_or_w_path`` is either an ``id,x,y`` coordinate file (weights are
    then built from the ``options.knn`` nearest neighbors) or an ``i,j,w``
    triplet file.  An intercept column is prepended unless a column named
    like one (or the first column) is identically one.
    """
    options = options or IngestOptions()
    y_names, y_vals, y_ids = read_numeric_csv(y_path)
    if len(y_names) != 1:
        raise ValidationError(f"{y_path}: expected one response column besides id, got {y_names}")
    x_names, X, x_ids = read_numeric_csv(x_path)
    n = y_vals.shape[0]
    if X.shape[0] != n:
        raise ValidationError(f"{x_path}: {X.shape[0]} rows but the response has {n}")
    _check_ids(x_ids, y_ids, x_path)

    W = _load_weights(coords_or_w_path, n, options.knn, y_ids)

    intercept = _intercept_column(x_names, X)
    if intercept is None:
        X = np.column_stack([np.ones(n), X])
        x_names = ["intercept"] + x_names
    elif intercept != 0:
        order = [intercept] + [j for j in range(X.shape[1]) if j != intercept]
        X = X[:, order]
        x_names = [x_names[j] for j in order]
    data = ModelData(y_vals[:, 0], X, W, tuple(x_names))
    return expand_durbin(data) if options.durbin else data


def _intercept_column(names, X):
    if X.shape[1] == 0:
        return None
    ones = [j for j in range(X.shape[1]) if np.all(X[:, j] == 1.0)]
    for j in ones:
        if names[j].lower() in INTERCEPT_NAMES:
            return j
    if ones and ones[0] == 0:
        return 0
    return None


def _load_weights(path, n, knn, y_ids):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    if header == ["i", "j", "w"]:
        return read_weights(path, n)
    if header == ["id", "x", "y"]:
        ids, coords = read_coordinates(path)
        if coords.shape[0] != n:
            raise ValidationError(f"{path}: {coords.shape[0]} locations but the response has {n} rows")
        _check_ids(ids, y_ids, path)
        return build_knn_weights(coords, knn)
    raise ValidationError(f"{path}: header must be 'id,x,y' (coordinates) or 'i,j,w' (weights)")


def expand_durbin(data):
    """Append spatial lags ``W x`` of every non-constant column, named ``"W " + name``."""
    if data.k == 1:
        return data
    lags = spatial_lag(data.W, data.X[:, 1:])
    names = tuple(data.column_names) + tuple(f"W {c}" for c in data.column_names[1:])
    return ModelData(data.y, np.hstack([data.X, lags]), data.W, names)
