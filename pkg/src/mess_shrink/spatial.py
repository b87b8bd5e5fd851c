"""Spatial weights and matrix-exponential operations for the MESS filter.

The filter ``S(rho) = exp(rho * W)`` is only ever applied to vectors.  Because
``W`` is row-stochastic, ``||W||_inf = 1`` and the plain Taylor series
converges quickly for the moderate values of ``rho`` that appear in practice.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import NumericalError, ValidationError

__all__ = [
    "SpatialWeights",
    "build_knn_weights",
    "mess_apply",
    "log_det_mess",
    "spatial_lag",
    "sar_equivalent",
    "read_coordinates",
    "read_weights",
]

ROW_SUM_TOL = 1e-12
DEFAULT_TOL = 1e-12
MAX_TERMS = 200


class SpatialWeights:
    """Immutable sparse row-stochastic neighborhood matrix with zero diagonal.

    Parameters
    ----------
    matrix : sparse matrix or array-like, shape (n, n)
        Weight matrix.  Stored internally in CSR form.
    check : bool
        Validate the invariants (zero diagonal, nonnegative weights, rows
        summing to one).  Only tests should ever switch this off.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix, check=True):
        m = sparse.csr_array(matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise ValidationError(f"weight matrix must be square, got {m.shape}")
        m.data.setflags(write=False)
        object.__setattr__(self, "_m", m)
        if check:
            self.validate()

    def __setattr__(self, name, value):
        raise AttributeError("SpatialWeights is immutable")

    @property
    def n(self):
        return self._m.shape[0]

    @property
    def matrix(self):
        return self._m

    @property
    def nnz(self):
        return self._m.nnz

    def rows(self):
        """Yield ``(i, neighbor_indices, weights)`` for every row."""
        m = self._m
        for i in range(self.n):
            sl = slice(m.indptr[i], m.indptr[i + 1])
            yield i, m.indices[sl], m.data[sl]

    def row_sums(self):
        return np.asarray(self._m.sum(axis=1)).ravel()

    def trace(self):
        return float(self._m.diagonal().sum())

    def to_dense(self):
        return self._m.toarray()

    def validate(self):
        m = self._m
        if not np.all(np.isfinite(m.data)):
            raise ValidationError("weight matrix contains non-finite entries")
        if np.any(m.data < 0):
            raise ValidationError("weight matrix contains negative entries")
        diag = m.diagonal()
        if np.any(diag != 0):
            i = int(np.flatnonzero(diag)[0])
            raise ValidationError(f"weight matrix has nonzero diagonal at row {i}")
        dev = np.abs(self.row_sums() - 1.0)
        if np.any(dev > ROW_SUM_TOL):
            i = int(np.argmax(dev))
            raise ValidationError(
                f"row {i} of weight matrix sums to {1.0 + dev[i]:.15g}, expected 1"
            )

    def triplets(self):
        """Return ``(i, j, w)`` arrays in row-major order."""
        coo = self._m.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    @classmethod
    def from_triplets(cls, i, j, w, n, check=True):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        w = np.asarray(w, dtype=float)
        if i.size and (i.min() < 0 or j.min() < 0 or i.max() >= n or j.max() >= n):
            raise ValidationError(f"triplet indices out of range for n={n}")
        return cls(sparse.coo_array((w, (i, j)), shape=(n, n)), check=check)

    def __eq__(self, other):
        if not isinstance(other, SpatialWeights) or other.n != self.n:
            return NotImplemented
        a, b = self._m, other._m
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    __hash__ = None

    def __repr__(self):
        return f"SpatialWeights(n={self.n}, nnz={self.nnz})"


def build_knn_weights(coords, k):
    """Row-stochastic k-nearest-neighbor weights from planar coordinates.

    Each row places weight ``1/k`` on the ``k`` closest other points by
    Euclidean distance.  Equidistant candidates are ranked by ascending
    observation index, so duplicated points never raise.

    Parameters
    ----------
    coords : array-like, shape (n, 2)
    k : int

    Returns
    -------
    SpatialWeights
    """
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError(f"coordinates must have shape (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("coordinates must be finite")
    n = pts.shape[0]
    k = int(k)
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    if k >= n:
        raise ValidationError(f"k={k} must be smaller than the number of points n={n}")

    cols = np.empty((n, k), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = pts[start:stop, None, :] - pts[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps lower indices first among exact ties
        cols[start:stop] = np.argsort(d2, axis=1, kind="stable")[:, :k]

    rows = np.repeat(np.arange(n), k)
    w = np.full(n * k, 1.0 / k)
    return SpatialWeights(sparse.coo_array((w, (rows, cols.ravel())), shape=(n, n)))


def mess_apply(W, rho, v, tol=DEFAULT_TOL):
    """Compute ``exp(rho * W) @ v`` by an adaptive truncated Taylor series.

    The series stops once the max-norm of the latest term drops below
    ``tol`` times the max-norm of the partial sum.  ``v`` may be a vector or
    an ``(n, m)`` block of column vectors.
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    rho = float(rho)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != W.n:
        raise ValidationError(f"vector has {v.shape[0]} rows, weights have n={W.n}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("input vector must be finite")
    if not math.isfinite(rho):
        raise NumericalError(f"non-finite spatial parameter rho={rho}")
    out = v.copy()
    if rho == 0.0:
        return out
    m = W.matrix
    term = v
    for l in range(1, MAX_TERMS + 1):
        term = (rho / l) * (m @ term)
        out += term
        tnorm = np.max(np.abs(term)) if term.size else 0.0
        onorm = np.max(np.abs(out)) if out.size else 0.0
        if not (math.isfinite(tnorm) and math.isfinite(onorm)):
            raise NumericalError(f"matrix exponential overflowed for rho={rho}")
        if tnorm <= tol * onorm or tnorm == 0.0:
            return out
    raise NumericalError(
        f"matrix exponential series did not converge in {MAX_TERMS} terms (rho={rho})"
    )


def log_det_mess(W, rho):
    """``log det exp(rho W) = rho * tr(W)``; zero for any valid weight matrix."""
    return float(rho) * W.trace()


def spatial_lag(W, X):
    """Spatially lagged columns ``W @ X``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] != W.n:
        raise ValidationError(f"X has {X.shape[0]} rows, weights have n={W.n}")
    return np.asarray(W.matrix @ X)


def sar_equivalent(rho):
    """Approximate SAR parameter ``xi = 1 - exp(rho)`` implied by a MESS ``rho``."""
    return 1.0 - math.exp(rho)


def read_coordinates(path):
    """Read a ``id,x,y`` CSV and return ``(ids, coords)``."""
    ids, pts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["id", "x", "y"]:
            raise ValidationError(f"{path}: expected header 'id,x,y', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}: row {lineno} has {len(row)} fields, expected 3")
            ids.append(row[0].strip())
            try:
                pts.append((float(row[1]), float(row[2])))
            except ValueError:
                raise ValidationError(f"{path}: row {lineno} has a non-numeric coordinate") from None
    return ids, np.array(pts, dtype=float).reshape(-1, 2)


def read_weights(path, n):
    """Read ``i,j,w`` triplets (0-based) and validate them as weights of size ``n``."""
    i, j, w = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["i", "j", "w"]:
            raise ValidationError(f"{path}: expected header 'i,j,w', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                i.append(int(row[0]))
                j.append(int(row[1]))
                w.append(float(row[2]))
            except (ValueError, IndexError):
                raise ValidationError(f"{path}: malformed triplet on row {lineno}") from None
    return SpatialWeights.from_triplets(i, j, w, n)


def write_weights(path, W):
    i, j, w = W.triplets()
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["i", "j", "w"])
        for a, b, c in zip(i, j, w):
            out.writerow([int(a), int(b), repr(float(c))])
