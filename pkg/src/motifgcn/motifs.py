"""Triad motif census and motif adjacency matrices for directed graphs.

The thirteen weakly connected 3-vertex directed simple graphs are numbered
M1..M13 by (edge count, lexicographically smallest row-major 3x3 adjacency
bitstring over all vertex relabelings). Besides the triad classes there are
three 2-vertex projections: ``U`` (undirected union), ``Min`` (incoming edges,
the operator W^T) and ``Mout`` (outgoing edges, W).

Instances are matched as induced subgraphs, and ``counts[i, j]`` is the number
of instances that contain both i and j, which makes every triad adjacency
symmetric.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from motifgcn.graph import DirectedGraph, SparseMatrix, transpose


class MotifId(str, Enum):
    U = "U"
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"
    M6 = "M6"
    M7 = "M7"
    M8 = "M8"
    M9 = "M9"
    M10 = "M10"
    M11 = "M11"
    M12 = "M12"
    M13 = "M13"
    MIN = "Min"
    MOUT = "Mout"

    def __str__(self) -> str:
        return self.value

    @property
    def is_triad(self) -> bool:
        return self.value.startswith("M") and self.value[1:].isdigit()

    @property
    def is_directional(self) -> bool:
        return self in (MotifId.MIN, MotifId.MOUT)

    @classmethod
    def parse(cls, name) -> MotifId:
        if isinstance(name, MotifId):
            return name
        key = str(name).strip()
        for m in cls:
            if m.value.lower() == key.lower():
                return m
        raise ValueError(f"unknown motif id {name!r}")


TRIAD_MOTIFS: tuple[MotifId, ...] = tuple(MotifId(f"M{i}") for i in range(1, 14))
ALL_MOTIFS: tuple[MotifId, ...] = (MotifId.U, *TRIAD_MOTIFS, MotifId.MIN, MotifId.MOUT)

# Ordered off-diagonal slots of a 3x3 pattern; bit b of a pattern code is slot b.
_SLOTS = ((0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1))
_PERMS = tuple(itertools.permutations(range(3)))


def _code_to_pattern(code: int) -> np.ndarray:
    a = np.zeros((3, 3), dtype=np.int8)
    for b, (i, j) in enumerate(_SLOTS):
        if code >> b & 1:
            a[i, j] = 1
    return a


def _pattern_to_code(a) -> int:
    return sum(1 << b for b, (i, j) in enumerate(_SLOTS) if a[i][j])


def _bitstring(a) -> str:
    return "".join(str(int(a[i][j])) for i in range(3) for j in range(3))


def _canonical(a) -> str:
    a = np.asarray(a)
    return min(_bitstring(a[np.ix_(p, p)]) for p in _PERMS)


def _weakly_connected(a) -> bool:
    # three vertices are connected iff at least two vertex pairs are linked
    a = np.asarray(a)
    linked = (a[0, 1] or a[1, 0]) + (a[0, 2] or a[2, 0]) + (a[1, 2] or a[2, 1])
    return linked >= 2


def _build_catalog():
    classes: dict[str, int] = {}
    for code in range(64):
        pat = _code_to_pattern(code)
        if _weakly_connected(pat):
            canon = _canonical(pat)
            classes.setdefault(canon, int(pat.sum()))
    order = sorted(classes, key=lambda c: (classes[c], c))
    by_canon = {c: TRIAD_MOTIFS[i] for i, c in enumerate(order)}
    patterns = {
        TRIAD_MOTIFS[i]: np.array([int(ch) for ch in c], dtype=np.int8).reshape(3, 3)
        for i, c in enumerate(order)
    }
    table = np.full(64, -1, dtype=np.int8)
    for code in range(64):
        pat = _code_to_pattern(code)
        if _weakly_connected(pat):
            table[code] = TRIAD_MOTIFS.index(by_canon[_canonical(pat)])
    return patterns, table


CATALOG, _CODE_TO_CLASS = _build_catalog()
"""Canonical 3x3 pattern of every triad class, keyed by MotifId."""


def classify_triad(pattern) -> MotifId | None:
    """Isomorphism class of a 3x3 binary pattern, or None if not weakly connected."""
    a = np.asarray(pattern)
    if a.shape != (3, 3):
        raise ValueError(f"pattern must be 3x3, got {a.shape}")
    if np.any(np.diag(a)):
        raise ValueError("pattern must have a zero diagonal")
    idx = _CODE_TO_CLASS[_pattern_to_code(a != 0)]
    return None if idx < 0 else TRIAD_MOTIFS[idx]


@dataclass(frozen=True, eq=False)
class MotifAdjacency:
    motif: MotifId
    matrix: SparseMatrix
    counts: SparseMatrix

    @property
    def n(self) -> int:
        return self.matrix.rows

    @property
    def symmetric(self) -> bool:
        return not self.motif.is_directional

    @property
    def density(self) -> float:
        n = self.n
        return self.matrix.nnz / (n * (n - 1)) if n > 1 else 0.0


def _edge_keys(a: SparseMatrix) -> np.ndarray:
    n = a.rows
    return np.sort(a.row_indices() * n + a.indices)


def _member(keys: np.ndarray, query: np.ndarray) -> np.ndarray:
    if keys.size == 0:
        return np.zeros(query.shape, dtype=bool)
    pos = np.searchsorted(keys, query)
    pos = np.minimum(pos, keys.size - 1)
    return keys[pos] == query


class TriadCensus:
    """All weakly connected induced triads of a graph, found once and reused.

    Triples are found by expanding wedges around every vertex of the
    undirected union graph: an open wedge has a unique center, and a closed
    triangle is kept only from its smallest vertex, so each triple appears
    exactly once.
    """

    def __init__(self, g: DirectedGraph):
        self.graph = g
        a = g.adjacency
        n = g.n
        und = SparseMatrix.from_coo(
            np.concatenate([a.row_indices(), a.indices]),
            np.concatenate([a.indices, a.row_indices()]),
            np.ones(2 * a.nnz),
            (n, n),
        )
        dir_keys = _edge_keys(a)
        und_keys = _edge_keys(und)

        centers, lefts, rights = [], [], []
        tri_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for u in range(n):
            nb = und.indices[und.indptr[u] : und.indptr[u + 1]]
            d = nb.size
            if d < 2:
                continue
            if d not in tri_cache:
                tri_cache[d] = np.triu_indices(d, 1)
            r, c = tri_cache[d]
            centers.append(np.full(r.size, u, dtype=np.int64))
            lefts.append(nb[r])
            rights.append(nb[c])
        if centers:
            u = np.concatenate(centers)
            v = np.concatenate(lefts)
            w = np.concatenate(rights)
        else:
            u = v = w = np.zeros(0, dtype=np.int64)

        closed = _member(und_keys, v * n + w)
        keep = ~closed | ((u < v) & (u < w))
        trip = np.sort(np.stack([u[keep], v[keep], w[keep]], axis=1), axis=1)

        i, j, l = trip[:, 0], trip[:, 1], trip[:, 2]
        code = np.zeros(i.size, dtype=np.int64)
        for b, (x, y) in enumerate(((i, j), (j, i), (i, l), (l, i), (j, l), (l, j))):
            code |= _member(dir_keys, x * n + y).astype(np.int64) << b
        cls = _CODE_TO_CLASS[code]
        assert np.all(cls >= 0)
        order = np.lexsort((l, j, i))
        self.triples = trip[order]
        self.classes = cls[order].astype(np.int64)

    def __len__(self) -> int:
        return int(self.triples.shape[0])

    def __iter__(self) -> Iterator[tuple[int, int, int, MotifId]]:
        for (i, j, l), c in zip(self.triples.tolist(), self.classes.tolist()):
            yield i, j, l, TRIAD_MOTIFS[c]

    def totals(self) -> dict[MotifId, int]:
        hist = np.bincount(self.classes, minlength=13)
        return {m: int(hist[k]) for k, m in enumerate(TRIAD_MOTIFS)}

    @cached_property
    def _sym_weight(self) -> SparseMatrix:
        a = self.graph.adjacency
        r = a.row_indices()
        return SparseMatrix.from_coo(
            np.concatenate([r, a.indices]),
            np.concatenate([a.indices, r]),
            np.concatenate([a.data, a.data]) / 2.0,
            a.shape,
        )

    def adjacency(self, motif: MotifId | str) -> MotifAdjacency:
        motif = MotifId.parse(motif)
        if not motif.is_triad:
            return projection_adjacency(self.graph, motif)
        n = self.graph.n
        sel = self.triples[self.classes == TRIAD_MOTIFS.index(motif)]
        i, j, l = sel[:, 0], sel[:, 1], sel[:, 2]
        rows = np.concatenate([i, j, i, l, j, l])
        cols = np.concatenate([j, i, l, i, l, j])
        counts = SparseMatrix.from_coo(rows, cols, np.ones(rows.size), (n, n))
        weighted = counts.csr.multiply(self._sym_weight.csr).tocsr()
        return MotifAdjacency(motif, SparseMatrix.from_coo(*_coo(weighted), (n, n)), counts)


def _coo(m):
    c = m.tocoo()
    return c.row, c.col, c.data


def projection_adjacency(g: DirectedGraph, motif: MotifId | str) -> MotifAdjacency:
    """Adjacency for the 2-vertex projections U, Min and Mout."""
    motif = MotifId.parse(motif)
    a = g.adjacency
    if motif is MotifId.MOUT:
        m = a
    elif motif is MotifId.MIN:
        m = transpose(a)
    elif motif is MotifId.U:
        m = SparseMatrix.from_coo(*_coo(a.csr.maximum(a.csr.T)), a.shape)
    else:
        raise ValueError(f"{motif} is a triad motif, use TriadCensus")
    counts = SparseMatrix.from_coo(m.row_indices(), m.indices, np.ones(m.nnz), m.shape)
    return MotifAdjacency(motif, m, counts)


def enumerate_triads(g: DirectedGraph) -> Iterator[tuple[int, int, int, MotifId]]:
    """Yield every weakly connected induced triple ``(i, j, l, class)`` with i < j < l."""
    yield from TriadCensus(g)


def motif_adjacency(g: DirectedGraph, motif: MotifId | str) -> MotifAdjacency:
    motif = MotifId.parse(motif)
    if motif.is_triad:
        return TriadCensus(g).adjacency(motif)
    return projection_adjacency(g, motif)


def motif_adjacencies(g: DirectedGraph, motifs: Iterable[MotifId | str]) -> dict[MotifId, MotifAdjacency]:
    """Build several adjacencies sharing a single triad census."""
    motifs = [MotifId.parse(m) for m in motifs]
    census = TriadCensus(g) if any(m.is_triad for m in motifs) else None
    return {m: census.adjacency(m) if m.is_triad else projection_adjacency(g, m) for m in motifs}
