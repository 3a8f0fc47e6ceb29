"""Deterministic CSR sparse matrices and the exact kernels built on them.

All matrices are kept in canonical form: row offsets non-decreasing,
column indices strictly increasing inside each row, float32 values with
no explicit zeros.  Arithmetic that merges entries accumulates in
float64 and rounds to float32 on store, so results are reproducible
bit-for-bit across runs and worker counts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

MAGIC = b"XMCM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIQQQ")


@dataclass
class SparseVector:
    """A sparse row: strictly increasing indices, nonzero float32 values."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_entries(cls, dim, indices, values):
        """Build a canonical vector from possibly unsorted (index, value) data.

        Duplicate indices are summed in float64; entries that round to
        zero in float32 are dropped.
        """
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if indices.shape != values.shape or indices.ndim != 1:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        if indices.size and (indices.min() < 0 or indices.max() >= dim):
            bad = indices[(indices < 0) | (indices >= dim)][0]
            raise ValueError(f"index {bad} out of range for dimension {dim}")
        order = np.argsort(indices, kind="stable")
        indices = indices[order]
        values = values[order]
        uniq, inverse = np.unique(indices, return_inverse=True)
        sums = np.zeros(uniq.size, dtype=np.float64)
        np.add.at(sums, inverse, values)
        stored = sums.astype(np.float32)
        keep = stored != 0.0
        return cls(dim, uniq[keep].astype(np.int32), stored[keep])

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        idx = np.flatnonzero(dense.astype(np.float32))
        return cls(dense.size, idx.astype(np.int32), dense[idx].astype(np.float32))

    @property
    def nnz(self):
        return int(self.indices.size)

    def to_dense(self):
        out = np.zeros(self.dim, dtype=np.float64)
        out[self.indices] = self.values.astype(np.float64)
        return out

    def l2_normalize(self):
        """Unit-scale the vector; an all-zero vector is returned unchanged."""
        norm = float(np.sqrt(np.sum(self.values.astype(np.float64) ** 2)))
        if norm == 0.0:
            return SparseVector(self.dim, self.indices.copy(), self.values.copy())
        scaled = (self.values.astype(np.float64) / norm).astype(np.float32)
        keep = scaled != 0.0
        return SparseVector(self.dim, self.indices[keep].copy(), scaled[keep])


@dataclass
class SparseMatrix:
    """Canonical CSR matrix (float32 values, int32 columns, int64 offsets)."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.col_indices.size)

    def validate(self):
        """Check every canonical-form invariant; raise ValueError on violation."""
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative dimension")
        offs = self.row_offsets
        if offs.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if offs[0] != 0 or offs[-1] != self.col_indices.size:
            raise ValueError("row_offsets endpoints do not match nnz")
        if np.any(np.diff(offs) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if self.col_indices.shape != self.values.shape:
            raise ValueError("col_indices and values length mismatch")
        if self.col_indices.size:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols:
                raise ValueError("column index out of range")
            for r in range(self.n_rows):
                cols = self.col_indices[offs[r] : offs[r + 1]]
                if cols.size > 1 and np.any(np.diff(cols) <= 0):
                    raise ValueError(f"row {r} columns not strictly increasing")
            if np.any(self.values == 0.0):
                raise ValueError("explicit zero stored")

    def row(self, i):
        """Return row ``i`` as a SparseVector sharing the underlying arrays."""
        if not 0 <= i < self.n_rows:
            raise IndexError(f"row {i} out of range for {self.n_rows} rows")
        s, e = int(self.row_offsets[i]), int(self.row_offsets[i + 1])
        return SparseVector(self.n_cols, self.col_indices[s:e], self.values[s:e])

    def row_counts(self):
        return np.diff(self.row_offsets)

    def to_coo(self):
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), self.row_counts())
        return rows, self.col_indices.astype(np.int64), self.values

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols), dtype=np.float64)
        rows, cols, vals = self.to_coo()
        out[rows, cols] = vals.astype(np.float64)
        return out

    def transpose(self):
        """Exact transpose; float payloads pass through untouched."""
        rows, cols, vals = self.to_coo()
        return _csr_from_canonical_coo(cols, rows, vals, self.n_cols, self.n_rows)

    def take_rows(self, indices):
        """Gather a row subset (in the given order) into a new matrix."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_rows):
            raise IndexError("row index out of range")
        counts = self.row_counts()[indices]
        starts = self.row_offsets[indices]
        gather = _span_indices(starts, counts)
        offsets = np.zeros(indices.size + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return SparseMatrix(
            int(indices.size),
            self.n_cols,
            offsets,
            self.col_indices[gather].copy(),
            self.values[gather].copy(),
        )

    def save(self, path):
        save_matrix(self, path)

    @classmethod
    def load(cls, path):
        return load_matrix(path)


def _span_indices(starts, counts):
    """Concatenate ranges [start, start+count) into one index array."""
    starts = np.asarray(starts, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    nonempty = counts > 0
    starts, counts = starts[nonempty], counts[nonempty]
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    # Increment array whose cumulative sum walks each span in turn: ones
    # inside a span, a jump to the next span's start at its boundary.
    incr = np.ones(total, dtype=np.int64)
    incr[0] = starts[0]
    span_pos = np.cumsum(counts)[:-1]
    incr[span_pos] = starts[1:] - (starts[:-1] + counts[:-1] - 1)
    return np.cumsum(incr)


def _csr_from_canonical_coo(rows, cols, vals, n_rows, n_cols):
    """Assemble CSR from COO triplets with no duplicates, any order."""
    order = np.lexsort((cols, rows))
    rows = rows[order]
    cols = cols[order]
    vals = vals[order]
    counts = np.bincount(rows, minlength=n_rows)
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return SparseMatrix(
        n_rows, n_cols, offsets, cols.astype(np.int32), vals.astype(np.float32)
    )


def from_coo(rows, cols, vals, n_rows, n_cols):
    """Canonicalize COO arrays: sort, sum duplicates in float64, drop zeros."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size:
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        fresh = np.empty(rows.size, dtype=bool)
        fresh[0] = True
        fresh[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        group = np.cumsum(fresh) - 1
        sums = np.zeros(int(group[-1]) + 1, dtype=np.float64)
        np.add.at(sums, group, vals)
        rows, cols = rows[fresh], cols[fresh]
        stored = sums.astype(np.float32)
        keep = stored != 0.0
        rows, cols, stored = rows[keep], cols[keep], stored[keep]
    else:
        stored = vals.astype(np.float32)
    counts = np.bincount(rows, minlength=n_rows)
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return SparseMatrix(n_rows, n_cols, offsets, cols.astype(np.int32), stored)


def from_coordinates(triplets, n_rows, n_cols):
    """Build a canonical matrix from (row, col, value) triplets.

    Duplicate coordinates are summed (float64 accumulation, rounded to
    float32 on store) and stored zeros are dropped.  Out-of-range
    coordinates raise ValueError naming the offending triplet.
    """
    triplets = list(triplets)
    if n_rows < 0 or n_cols < 0:
        raise ValueError("matrix dimensions must be non-negative")
    for r, c, v in triplets:
        if not (0 <= r < n_rows and 0 <= c < n_cols):
            raise ValueError(
                f"triplet ({r}, {c}, {v}) out of range for shape ({n_rows}, {n_cols})"
            )
    if not triplets:
        return from_coo([], [], [], n_rows, n_cols)
    rows, cols, vals = zip(*triplets)
    return from_coo(rows, cols, vals, n_rows, n_cols)


def from_dense(dense):
    dense = np.asarray(dense, dtype=np.float64)
    rows, cols = np.nonzero(dense.astype(np.float32))
    return from_coo(rows, cols, dense[rows, cols], dense.shape[0], dense.shape[1])


def identity(n):
    return SparseMatrix(
        n,
        n,
        np.arange(n + 1, dtype=np.int64),
        np.arange(n, dtype=np.int32),
        np.ones(n, dtype=np.float32),
    )


def block_2x2(a, b, c, d):
    """Assemble [[A, B], [C, D]]; shapes must agree along shared edges."""
    if a.n_rows != b.n_rows or c.n_rows != d.n_rows:
        raise ValueError(
            "row mismatch: A has %d rows, B %d; C has %d, D %d"
            % (a.n_rows, b.n_rows, c.n_rows, d.n_rows)
        )
    if a.n_cols != c.n_cols or b.n_cols != d.n_cols:
        raise ValueError(
            "column mismatch: A has %d cols, C %d; B has %d, D %d"
            % (a.n_cols, c.n_cols, b.n_cols, d.n_cols)
        )
    top = a.n_rows
    left = a.n_cols
    parts = []
    for block, roff, coff in ((a, 0, 0), (b, 0, left), (c, top, 0), (d, top, left)):
        rows, cols, vals = block.to_coo()
        parts.append((rows + roff, cols + coff, vals))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts]).astype(np.float64)
    return _csr_from_canonical_coo(
        rows, cols, vals, a.n_rows + c.n_rows, a.n_cols + b.n_cols
    )


def hstack(a, b):
    """Concatenate two matrices side by side."""
    if a.n_rows != b.n_rows:
        raise ValueError(f"row mismatch: {a.n_rows} vs {b.n_rows}")
    rows_a, cols_a, vals_a = a.to_coo()
    rows_b, cols_b, vals_b = b.to_coo()
    return _csr_from_canonical_coo(
        np.concatenate([rows_a, rows_b]),
        np.concatenate([cols_a, cols_b + a.n_cols]),
        np.concatenate([vals_a, vals_b]).astype(np.float64),
        a.n_rows,
        a.n_cols + b.n_cols,
    )


def l2_normalize_rows(m):
    """Scale every row to unit L2 norm; zero rows pass through unchanged.

    Norms are accumulated in float64; the scaled values are rounded to
    float32 on store.
    """
    rows, cols, vals = m.to_coo()
    sq = vals.astype(np.float64) ** 2
    norms_sq = np.zeros(m.n_rows, dtype=np.float64)
    np.add.at(norms_sq, rows, sq)
    norms = np.sqrt(norms_sq)
    scale = np.ones(m.n_rows, dtype=np.float64)
    nonzero = norms > 0.0
    scale[nonzero] = 1.0 / norms[nonzero]
    scaled = vals.astype(np.float64) * scale[rows]
    return from_coo(rows, cols, scaled, m.n_rows, m.n_cols)


def top_k_per_row(m, k):
    """Keep the k largest stored values in each row.

    Ties are broken toward the smaller column index.  Rows with at most
    k entries are unchanged.
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    offs = m.row_offsets
    keep = []
    for r in range(m.n_rows):
        s, e = int(offs[r]), int(offs[r + 1])
        if e - s <= k:
            keep.append(np.arange(s, e, dtype=np.int64))
            continue
        cols = m.col_indices[s:e]
        vals = m.values[s:e].astype(np.float64)
        order = np.lexsort((cols, -vals))[:k]
        keep.append(np.sort(order) + s)
    gather = (
        np.concatenate(keep) if keep else np.empty(0, dtype=np.int64)
    )
    counts = np.array([idx.size for idx in keep], dtype=np.int64)
    offsets = np.zeros(m.n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return SparseMatrix(
        m.n_rows,
        m.n_cols,
        offsets,
        m.col_indices[gather].copy(),
        m.values[gather].copy(),
    )


def row_dot(w, x):
    """Exact sparse inner product, accumulated in float64 over ascending index."""
    if w.dim != x.dim:
        raise ValueError(f"dimension mismatch: {w.dim} vs {x.dim}")
    _, wi, xi = np.intersect1d(
        w.indices, x.indices, assume_unique=True, return_indices=True
    )
    if wi.size == 0:
        return 0.0
    products = w.values[wi].astype(np.float64) * x.values[xi].astype(np.float64)
    return float(products.sum())


def save_matrix(m, path):
    """Write the binary matrix format: magic, version, dims, then payload."""
    m.validate()
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, m.n_rows, m.n_cols, m.nnz)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(m.row_offsets.astype("<u8").tobytes())
        fh.write(m.col_indices.astype("<u4").tobytes())
        fh.write(m.values.astype("<f4").tobytes())


def load_matrix(path):
    """Read the binary matrix format, rejecting malformed files."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_rows, n_cols, nnz = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic bytes {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * (n_rows + 1) + 4 * nnz + 4 * nnz
    if len(raw) != expected:
        raise FormatError(
            f"{path}: size mismatch (expected {expected} bytes, found {len(raw)})"
        )
    if n_cols > np.iinfo(np.int32).max:
        raise FormatError(f"{path}: column count {n_cols} too large")
    pos = _HEADER.size
    offsets = np.frombuffer(raw, dtype="<u8", count=n_rows + 1, offset=pos)
    pos += 8 * (n_rows + 1)
    cols = np.frombuffer(raw, dtype="<u4", count=nnz, offset=pos)
    pos += 4 * nnz
    vals = np.frombuffer(raw, dtype="<f4", count=nnz, offset=pos)
    m = SparseMatrix(
        int(n_rows),
        int(n_cols),
        offsets.astype(np.int64),
        cols.astype(np.int32),
        vals.astype(np.float32),
    )
    try:
        m.validate()
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return m
