"""Sequential-graph adjacency, its symmetric normalisation and sparse-dense products.

Node order is items ``[0, m)`` followed by users ``[m, m+n)``. Rows receive
messages: entry ``(i, j)`` carries node ``j``'s embedding into node ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR-ordered coordinate matrix (rows sorted, columns sorted within a row)."""

    rows: int
    cols: int
    row: np.ndarray
    col: np.ndarray
    data: np.ndarray

    @classmethod
    def from_entries(cls, rows, cols, entries, duplicates="error"):
        """Build from ``(row, col, weight)`` triples.

        ``duplicates`` is ``"error"`` or ``"collapse"`` (keep one entry, weight of the first).
        """
        if len(entries):
            arr = np.asarray(entries, dtype=np.float64).reshape(-1, 3)
            r = arr[:, 0].astype(np.int64)
            c = arr[:, 1].astype(np.int64)
            w = arr[:, 2]
        else:
            r = c = np.zeros(0, dtype=np.int64)
            w = np.zeros(0)
        return cls.from_arrays(rows, cols, r, c, w, duplicates)

    @classmethod
    def from_arrays(cls, rows, cols, r, c, w, duplicates="error"):
        r = np.asarray(r, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        w = np.asarray(w, dtype=np.float64)
        if r.size and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise DimensionError(f"entry index out of range for a {rows}x{cols} matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("sparse weights must be finite")
        order = np.lexsort((c, r))
        r, c, w = r[order], c[order], w[order]
        if r.size > 1:
            dup = (r[1:] == r[:-1]) & (c[1:] == c[:-1])
            if dup.any():
                if duplicates != "collapse":
                    i = int(np.argmax(dup))
                    raise ValueError(f"duplicate entry ({r[i]}, {c[i]})")
                keep = np.concatenate([[True], ~dup])
                r, c, w = r[keep], c[keep], w[keep]
        return cls(int(rows), int(cols), r, c, w)

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    @cached_property
    def indptr(self) -> np.ndarray:
        return np.searchsorted(self.row, np.arange(self.rows + 1))

    @cached_property
    def T(self) -> "SparseMatrix":
        return SparseMatrix.from_arrays(self.cols, self.rows, self.col, self.row, self.data)

    def entries(self):
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.row, self.col, self.data)]

    def get(self, i, j) -> float:
        lo, hi = np.searchsorted(self.row, [i, i + 1])
        k = lo + np.searchsorted(self.col[lo:hi], j)
        if k < hi and self.col[k] == j:
            return float(self.data[k])
        return 0.0

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row, weights=self.data, minlength=self.rows)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row, self.col] = self.data
        return out


def spmm(a: SparseMatrix, e: np.ndarray) -> np.ndarray:
    """Exact sparse-dense product, summing each row in ascending column order."""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or a.cols != e.shape[0]:
        raise DimensionError(f"cannot multiply {a.rows}x{a.cols} sparse by {e.shape} dense")
    out = np.zeros((a.rows, e.shape[1]))
    if a.nnz == 0:
        return out
    products = a.data[:, None] * e[a.col]
    indptr = a.indptr
    nonempty = np.flatnonzero(np.diff(indptr))
    out[nonempty] = np.add.reduceat(products, indptr[nonempty], axis=0)
    return out


def build_adjacency(train, m: int, n: int) -> SparseMatrix:
    """Binary adjacency with user<->item edges and one-way item transitions."""
    r, c = [], []
    for rec in train:
        u = rec.user_index
        if not 0 <= u < n:
            raise DimensionError(f"user index {u} out of range [0, {n})")
        for v in rec.items:
            if not 0 <= v < m:
                raise DimensionError(f"item index {v} out of range [0, {m})")
            r += [v, m + u]
            c += [m + u, v]
        for prev, cur in zip(rec.items[:-1], rec.items[1:]):
            r.append(cur)
            c.append(prev)
    return SparseMatrix.from_arrays(m + n, m + n, r, c, np.ones(len(r)), duplicates="collapse")


def normalize(raw: SparseMatrix) -> tuple[SparseMatrix, np.ndarray]:
    """Return D^-1/2 (raw + I) D^-1/2 with D the row sums of raw + I, and those sums."""
    if raw.rows != raw.cols:
        raise DimensionError("normalisation needs a square matrix")
    k = raw.rows
    diag = np.arange(k)
    has_diag = np.zeros(k, dtype=bool)
    has_diag[raw.row[raw.row == raw.col]] = True
    r = np.concatenate([raw.row, diag[~has_diag]])
    c = np.concatenate([raw.col, diag[~has_diag]])
    w = np.concatenate([raw.data + (raw.row == raw.col), np.ones(int((~has_diag).sum()))])
    plus_i = SparseMatrix.from_arrays(k, k, r, c, w)
    degree = plus_i.row_sums()
    scale = 1.0 / np.sqrt(degree)
    data = plus_i.data * scale[plus_i.row] * scale[plus_i.col]
    return SparseMatrix(k, k, plus_i.row, plus_i.col, data), degree


@dataclass(frozen=True, eq=False)
class SequentialGraph:
    m_items: int
    n_users: int
    raw: SparseMatrix
    normalized: SparseMatrix
    degree: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.m_items + self.n_users


def build_graph(train, m: int, n: int) -> SequentialGraph:
    raw = build_adjacency(train, m, n)
    norm, degree = normalize(raw)
    return SequentialGraph(m, n, raw, norm, degree)


def dump_graph(graph: SequentialGraph, path) -> None:
    """Write the normalised matrix as ``row \\t col \\t weight`` lines."""
    a = graph.normalized
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, j, w in zip(a.row, a.col, a.data):
            fh.write(f"{int(i)}\t{int(j)}\t{float(w)!r}\n")
