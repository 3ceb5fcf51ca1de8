"""Sparse directed-graph storage and the CSR kernels the rest of the package uses.

Dense matrices are plain float64 ``numpy`` arrays. Sparse matrices are kept in
canonical CSR form (sorted column indices, no duplicates, no stored zeros)
and are immutable once built.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class ShapeMismatchError(ValueError):
    """Raised when two operands have incompatible shapes."""

    def __init__(self, op: str, left: tuple, right: tuple):
        super().__init__(f"{op}: incompatible shapes {tuple(left)} and {tuple(right)}")
        self.left = tuple(left)
        self.right = tuple(right)


class EdgeListError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix of float64 values."""

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, drop_zeros: bool = True) -> SparseMatrix:
        """Build a canonical matrix from triplets; duplicate entries are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        m = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        m.sum_duplicates()
        if drop_zeros:
            m.eliminate_zeros()
        m.sort_indices()
        return cls._from_scipy(m)

    @classmethod
    def from_dense(cls, a) -> SparseMatrix:
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n: int) -> SparseMatrix:
        idx = np.arange(n)
        return cls.from_coo(idx, idx, np.ones(n), (n, n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> SparseMatrix:
        return cls.from_coo([], [], [], (rows, cols))

    @classmethod
    def _from_scipy(cls, m: sp.csr_matrix) -> SparseMatrix:
        return cls(
            shape=(int(m.shape[0]), int(m.shape[1])),
            indptr=_frozen(np.array(m.indptr, dtype=np.int64)),
            indices=_frozen(np.array(m.indices, dtype=np.int64)),
            data=_frozen(np.array(m.data, dtype=np.float64)),
        )

    @cached_property
    def csr(self) -> sp.csr_matrix:
        # scipy view used only as the multiply kernel
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    @property
    def T(self) -> SparseMatrix:
        return transpose(self)

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.rows), np.diff(self.indptr))

    def scale_rows_cols(self, left: np.ndarray, right: np.ndarray) -> SparseMatrix:
        """Return diag(left) @ self @ diag(right)."""
        r = self.row_indices()
        return SparseMatrix.from_coo(r, self.indices, left[r] * self.data * right[self.indices], self.shape)

    def is_symmetric(self) -> bool:
        if self.rows != self.cols:
            return False
        t = transpose(self)
        return (
            np.array_equal(self.indptr, t.indptr)
            and np.array_equal(self.indices, t.indices)
            and np.array_equal(self.data, t.data)
        )

    def equals(self, other: SparseMatrix) -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(m: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse times dense product. ``x`` may be a vector or an (n, q) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != m.cols:
        raise ShapeMismatchError("spmv", m.shape, x.shape)
    return np.asarray(m.csr @ x)


def transpose(m: SparseMatrix) -> SparseMatrix:
    t = m.csr.transpose().tocsr()
    t.sort_indices()
    return SparseMatrix._from_scipy(t)


def degree_vector(m: SparseMatrix, orientation: str = "row") -> np.ndarray:
    """Row sums (out-degree) or column sums (in-degree) as an (n, 1) column."""
    if m.rows != m.cols:
        raise ShapeMismatchError("degree_vector", m.shape, m.shape[::-1])
    if orientation == "row":
        d = np.asarray(m.csr.sum(axis=1), dtype=np.float64).ravel()
    elif orientation == "column":
        d = np.bincount(m.indices, weights=m.data, minlength=m.cols).astype(np.float64)
    else:
        raise ValueError(f"orientation must be 'row' or 'column', got {orientation!r}")
    return d.reshape(-1, 1)


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Weighted simple graph; ``adjacency[i, j]`` is the weight of edge i -> j."""

    adjacency: SparseMatrix
    directed: bool = True
    dropped_self_loops: int = field(default=0, compare=False)

    def __post_init__(self):
        a = self.adjacency
        if a.rows != a.cols:
            raise ShapeMismatchError("DirectedGraph", a.shape, a.shape[::-1])
        if a.nnz and np.any(a.data < 0):
            raise ValueError("edge weights must be nonnegative")
        if a.nnz and np.any(a.row_indices() == a.indices):
            raise ValueError("self-loops are not allowed")
        if not self.directed and not a.is_symmetric():
            raise ValueError("undirected graph requires a symmetric adjacency")

    @classmethod
    def from_edges(cls, n: int, src, dst, weights=None, directed: bool = True) -> DirectedGraph:
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        w = np.ones(src.size) if weights is None else np.asarray(weights, dtype=np.float64)
        if src.size and (src.max() >= n or dst.max() >= n or min(src.min(), dst.min()) < 0):
            raise ValueError(f"vertex index out of range for n={n}")
        loops = src == dst
        n_loops = int(loops.sum())
        if n_loops:
            log.warning("dropped %d self-loop(s)", n_loops)
        keep = ~loops
        src, dst, w = src[keep], dst[keep], w[keep]
        if not directed:
            src, dst, w = np.concatenate([src, dst]), np.concatenate([dst, src]), np.concatenate([w, w])
        adj = SparseMatrix.from_coo(src, dst, w, (n, n))
        return cls(adj, directed=directed, dropped_self_loops=n_loops)

    @property
    def n(self) -> int:
        return self.adjacency.rows

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.adjacency
        return a.row_indices(), a.indices.copy(), a.data.copy()

    def induced_subgraph(self, vertices) -> DirectedGraph:
        vertices = np.asarray(vertices, dtype=np.int64)
        sub = self.adjacency.csr[vertices][:, vertices].tocsr()
        sub.sort_indices()
        return DirectedGraph(SparseMatrix._from_scipy(sub), directed=self.directed)


def iter_edge_lines(path) -> Iterator[tuple[int, str, str, float | None, int | None]]:
    """Yield ``(lineno, src, dst, weight, header_n)`` from an edge-list file.

    Header lines (``% n=<count>``) are reported with ``src`` and ``dst`` empty.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("%"):
                body = line[1:].strip()
                if body.startswith("n="):
                    try:
                        yield lineno, "", "", None, int(body[2:])
                    except ValueError:
                        raise EdgeListError(path, lineno, f"bad header {line!r}") from None
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) not in (2, 3):
                raise EdgeListError(path, lineno, f"expected 2 or 3 fields, got {len(parts)}")
            w = None
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise EdgeListError(path, lineno, f"bad weight {parts[2]!r}") from None
                if not np.isfinite(w) or w < 0:
                    raise EdgeListError(path, lineno, f"weight must be finite and nonnegative, got {w}")
            yield lineno, parts[0], parts[1], w, None


def load_edge_list(path, n: int | None = None, directed: bool = True) -> DirectedGraph:
    """Read an edge-list file; duplicate edges are summed and self-loops dropped."""
    src, dst, wts = [], [], []
    header_n = None
    max_idx = -1
    for lineno, s, d, w, hn in iter_edge_lines(path):
        if hn is not None:
            header_n = hn
            continue
        try:
            i, j = int(s), int(d)
        except ValueError:
            raise EdgeListError(path, lineno, f"non-integer vertex index in {s!r} {d!r}") from None
        if i < 0 or j < 0:
            raise EdgeListError(path, lineno, "negative vertex index")
        limit = n if n is not None else header_n
        if limit is not None and max(i, j) >= limit:
            raise EdgeListError(path, lineno, f"vertex index {max(i, j)} >= n={limit}")
        src.append(i)
        dst.append(j)
        wts.append(1.0 if w is None else w)
        max_idx = max(max_idx, i, j)
    if n is None:
        n = header_n if header_n is not None else max_idx + 1
    return DirectedGraph.from_edges(n, src, dst, wts, directed=directed)


def save_edge_list(g: DirectedGraph | SparseMatrix, path, header: dict | None = None) -> None:
    """Write an edge list; ``repr`` of the weights keeps the round trip exact."""
    m = g.adjacency if isinstance(g, DirectedGraph) else g
    rows = m.row_indices()
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"% n={m.rows}\n")
        for key, val in (header or {}).items():
            fh.write(f"% {key}={val}\n")
        for i, j, w in zip(rows.tolist(), m.indices.tolist(), m.data.tolist()):
            fh.write(f"{i}\t{j}\t{w!r}\n")
