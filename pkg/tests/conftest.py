"""Shared fixtures and reference implementations used across the tests.

The reference implementations here are deliberately naive (dense loops over
all vertex triples, explicit permutations) so they share no code path with
the library routines they check.
"""

import itertools

import numpy as np
import pytest

from motifgcn.graph import DirectedGraph
from motifgcn.motifs import CATALOG, TRIAD_MOTIFS


def random_digraph(rng, n, density, weighted=False):
    a = (rng.random((n, n)) < density).astype(float)
    np.fill_diagonal(a, 0.0)
    if weighted:
        a *= rng.uniform(0.5, 2.0, size=(n, n))
    src, dst = np.nonzero(a)
    return DirectedGraph.from_edges(n, src, dst, a[src, dst])


def _relabelings():
    table = {}
    for m in TRIAD_MOTIFS:
        ref = CATALOG[m].astype(int)
        for perm in itertools.permutations(range(3)):
            table[ref[np.ix_(perm, perm)].tobytes()] = m
    return table


_RELABELED = _relabelings()


def brute_classify(p):
    """Match a 3x3 0/1 pattern against every relabeling of every catalog pattern."""
    return _RELABELED.get(np.asarray(p, dtype=int).tobytes())


def brute_triads(dense):
    """All weakly connected induced triples of a dense adjacency, as {(i,j,l): motif}."""
    b = (np.asarray(dense) > 0).astype(int)
    n = b.shape[0]
    out = {}
    for tri in itertools.combinations(range(n), 3):
        m = brute_classify(b[np.ix_(tri, tri)])
        if m is not None:
            out[tri] = m
    return out


def brute_motif_matrices(dense, motif, triads=None):
    """Per-pair co-occurrence counts and (w_ij + w_ji)/2-weighted matrix for one motif."""
    w = np.asarray(dense, dtype=float)
    n = w.shape[0]
    counts = np.zeros((n, n))
    triads = brute_triads(w) if triads is None else triads
    for tri, m in triads.items():
        if m != motif:
            continue
        for i, j in itertools.permutations(tri, 2):
            counts[i, j] += 1
    return counts, counts * (w + w.T) / 2.0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cycle3():
    return DirectedGraph.from_edges(3, [0, 1, 2], [1, 2, 0])


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines at the end of the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
