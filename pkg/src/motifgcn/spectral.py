"""Normalized and rescaled motif Laplacians, plus a dense spectral reference.

The dense eigendecomposition here is a plain cyclic Jacobi solver. It only
exists to check the sparse polynomial filters at small sizes and is capped
at ``DENSE_CAP`` vertices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from motifgcn.graph import ShapeMismatchError, SparseMatrix, degree_vector, spmv, transpose
from motifgcn.motifs import MotifAdjacency, MotifId

log = logging.getLogger(__name__)

DENSE_CAP = 512


@dataclass(frozen=True, eq=False)
class NormalizedLaplacian:
    matrix: SparseMatrix
    source_motif: MotifId | None = None
    symmetric: bool = True
    lambda_max: float | None = None

    @property
    def n(self) -> int:
        return self.matrix.rows


@dataclass(frozen=True, eq=False)
class RescaledLaplacian:
    """``scale * L - shift * I`` with ``scale = 2 / lambda_max`` and ``shift = 1``."""

    matrix: SparseMatrix
    scale: float
    shift: float = 1.0
    source_motif: MotifId | None = None

    @property
    def n(self) -> int:
        return self.matrix.rows


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def _inv_sqrt(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def normalized_laplacian(adj: MotifAdjacency | SparseMatrix, symmetric: bool | None = None) -> NormalizedLaplacian:
    """``I - D^{-1/2} W D^{-1/2}``.

    Directional operators (Min/Mout) use out-degrees on the left factor and
    in-degrees on the right one. Zero-degree vertices keep a unit diagonal
    and no off-diagonal entries.
    """
    if isinstance(adj, MotifAdjacency):
        w, motif = adj.matrix, adj.motif
        if symmetric is None:
            symmetric = adj.symmetric
    else:
        w, motif = adj, None
        if symmetric is None:
            symmetric = w.is_symmetric()
    if w.rows != w.cols:
        raise ShapeMismatchError("normalized_laplacian", w.shape, w.shape[::-1])
    if w.nnz and np.any(w.data < 0):
        raise ValueError("adjacency has negative entries")
    n = w.rows
    if w.nnz and np.any(w.row_indices() == w.indices):
        # self-loops would move the diagonal; drop them
        keep = w.row_indices() != w.indices
        w = SparseMatrix.from_coo(w.row_indices()[keep], w.indices[keep], w.data[keep], w.shape)
    d_out = degree_vector(w, "row").ravel()
    if symmetric:
        left = right = _inv_sqrt(d_out)
    else:
        left, right = _inv_sqrt(d_out), _inv_sqrt(degree_vector(w, "column").ravel())
    off = w.scale_rows_cols(left, right)
    r = off.row_indices()
    lap = SparseMatrix.from_coo(
        np.concatenate([np.arange(n), r]),
        np.concatenate([np.arange(n), off.indices]),
        np.concatenate([np.ones(n), -off.data]),
        (n, n),
    )
    if symmetric and not lap.is_symmetric():
        # D^{-1/2} W D^{-1/2} can differ from its transpose in the last bit
        lap = _symmetrize(lap)
    return NormalizedLaplacian(lap, motif, bool(symmetric))


def _symmetrize(m: SparseMatrix) -> SparseMatrix:
    t = transpose(m)
    r = m.row_indices()
    rt = t.row_indices()
    return SparseMatrix.from_coo(
        np.concatenate([r, rt]), np.concatenate([m.indices, t.indices]), np.concatenate([m.data, t.data]) / 2, m.shape
    )


def estimate_lambda_max(
    lap: NormalizedLaplacian | SparseMatrix,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-9,
    block: int = 8,
) -> float:
    """Largest eigenvalue by block power iteration (on the symmetric part if needed).

    A block of ``block`` vectors is iterated and re-orthonormalized each step;
    the estimate is the top Ritz value of the block, which converges at the
    rate lambda_{block+1} / lambda_max rather than lambda_2 / lambda_max, so
    clustered top eigenvalues do not stall it. A symmetric normalized
    Laplacian that fails to converge falls back to the bound 2.0.
    """
    if isinstance(lap, NormalizedLaplacian):
        m, symmetric = lap.matrix, lap.symmetric
    else:
        m, symmetric = lap, lap.is_symmetric()
    n = m.rows
    if n == 0:
        return 0.0
    mt = None if symmetric else transpose(m)

    def apply(x):
        y = spmv(m, x)
        return y if mt is None else 0.5 * (y + spmv(mt, x))

    # Gershgorin shift: makes the operator PSD so its top eigenvalue dominates
    diag = np.zeros(n)
    r = m.row_indices()
    on = r == m.indices
    diag[r[on]] = m.data[on]
    radius = np.bincount(r[~on], weights=np.abs(m.data[~on]), minlength=n)
    shift = max(0.0, -float(np.min(diag - radius)))
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, min(block, n))))
    rho = None
    for _ in range(max_iter):
        aq = apply(q)
        ritz = jacobi_eigh(0.5 * ((q.T @ aq) + (q.T @ aq).T))[0]
        new = float(ritz[-1])
        if rho is not None and abs(new - rho) <= tol * max(abs(new), 1.0):
            return new
        rho = new
        y = aq + shift * q if shift else aq
        if not np.any(y):
            return 0.0
        q, _ = np.linalg.qr(y)
    if symmetric:
        log.warning("lambda_max did not converge in %d iterations (n=%d); using the bound 2.0", max_iter, n)
        return 2.0
    log.warning("lambda_max did not converge in %d iterations (n=%d); using last estimate %.6g", max_iter, n, rho)
    return float(rho)


def rescale(lap: NormalizedLaplacian, lambda_max: float) -> RescaledLaplacian:
    """``(2 / lambda_max) L - I`` with the full diagonal kept explicitly."""
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    m = lap.matrix
    n = m.rows
    s = 2.0 / lambda_max
    r = m.row_indices()
    out = SparseMatrix.from_coo(
        np.concatenate([r, np.arange(n)]),
        np.concatenate([m.indices, np.arange(n)]),
        np.concatenate([s * m.data, -np.ones(n)]),
        (n, n),
        drop_zeros=False,
    )
    return RescaledLaplacian(out, s, 1.0, lap.source_motif)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Stops once the off-diagonal Frobenius norm drops below ``tol`` times the
    matrix norm, after one further sweep: eigenvector error scales like the
    remaining off-diagonal mass over the eigenvalue gap, and convergence is
    quadratic, so the extra sweep is cheap insurance for close eigenvalues.
    Returns ascending eigenvalues and the matching eigenvectors as columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1e-300)
    offdiag = ~np.eye(n, dtype=bool)
    polished = False
    for _ in range(max_sweeps):
        # summed directly: sum(a^2) - sum(diag^2) cancels catastrophically near convergence
        off = math.sqrt(np.sum(a[offdiag] ** 2))
        if off <= tol * scale:
            if polished or off == 0.0:
                break
            polished = True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def dense_eigendecomposition(lap: NormalizedLaplacian | SparseMatrix | np.ndarray, cap: int = DENSE_CAP) -> SpectralDecomposition:
    if isinstance(lap, NormalizedLaplacian):
        a = lap.matrix.toarray()
    elif isinstance(lap, SparseMatrix):
        a = lap.toarray()
    else:
        a = np.asarray(lap, dtype=np.float64)
    n = a.shape[0]
    if n > cap:
        raise ValueError(f"dense eigendecomposition capped at n={cap}, got n={n}")
    if not np.array_equal(a, a.T):
        raise ValueError("dense eigendecomposition requires a symmetric matrix")
    w, v = jacobi_eigh(a)
    return SpectralDecomposition(w, v)


def chebyshev_t(j: int, x: np.ndarray) -> np.ndarray:
    """Closed-form T_j: ``cos(j arccos x)`` on [-1, 1], ``cosh(j arccosh |x|)``
    (with the parity sign) outside it."""
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) <= 1.0
    out = np.empty_like(x)
    out[inside] = np.cos(j * np.arccos(x[inside]))
    big = ~inside
    out[big] = np.sign(x[big]) ** j * np.cosh(j * np.arccosh(np.abs(x[big])))
    return out


def spectral_filter_oracle(
    dec: SpectralDecomposition,
    coeffs,
    f: np.ndarray,
    lambda_max: float | None = None,
) -> np.ndarray:
    """Apply ``sum_j theta_j T_j`` as a diagonal multiplier in the eigenbasis.

    ``dec`` is the decomposition of an unscaled Laplacian; eigenvalues are
    mapped to ``2 lambda / lambda_max - 1`` before evaluating T_j. ``coeffs``
    is either a vector (same filter on every column of ``f``) or a
    ``(p + 1, q_in, q_out)`` channel-mixing tensor.
    """
    f = np.asarray(f, dtype=np.float64)
    phi = dec.eigenvectors
    if f.shape[0] != phi.shape[0]:
        raise ShapeMismatchError("spectral_filter_oracle", phi.shape, f.shape)
    lam_max = float(dec.eigenvalues[-1]) if lambda_max is None else lambda_max
    lam = 2.0 * dec.eigenvalues / lam_max - 1.0
    coeffs = np.asarray(coeffs, dtype=np.float64)
    f2 = f.reshape(f.shape[0], -1)
    fhat = phi.T @ f2
    if coeffs.ndim == 1:
        mult = sum(c * chebyshev_t(j, lam) for j, c in enumerate(coeffs))
        return (phi @ (mult[:, None] * fhat)).reshape(f.shape)
    if coeffs.ndim != 3 or coeffs.shape[1] != f2.shape[1]:
        raise ShapeMismatchError("spectral_filter_oracle", coeffs.shape, f.shape)
    out_hat = np.zeros((phi.shape[0], coeffs.shape[2]))
    for j in range(coeffs.shape[0]):
        out_hat += (chebyshev_t(j, lam)[:, None] * fhat) @ coeffs[j]
    return phi @ out_hat
