"""Polynomial graph filters acting on multichannel vertex signals.

Signals are ``(n, q_in)`` arrays. Coefficients carry a channel-mixing axis:
every filter term owns a ``(q_in, q_out)`` matrix, so a filter with T terms
has coefficients of shape ``(T, q_in, q_out)`` and maps ``(n, q_in)`` to
``(n, q_out)``, summing over input channels.

Operators may be ``RescaledLaplacian``, ``SparseMatrix`` or dense arrays.
"""

from __future__ import annotations

import itertools

import numpy as np

from motifgcn.graph import ShapeMismatchError, SparseMatrix, spmv
from motifgcn.spectral import RescaledLaplacian

DEFAULT_WORD_BUDGET = 4096


class WordBudgetError(ValueError):
    """The multivariate expansion would need more words than allowed."""


def apply_operator(op, x: np.ndarray) -> np.ndarray:
    if isinstance(op, RescaledLaplacian):
        op = op.matrix
    if isinstance(op, SparseMatrix):
        return spmv(op, x)
    op = np.asarray(op)
    if op.shape[1] != x.shape[0]:
        raise ShapeMismatchError("apply_operator", op.shape, x.shape)
    return op @ x


def _operator_size(op) -> int:
    if isinstance(op, RescaledLaplacian):
        return op.n
    return op.shape[0]


def _mix(terms, coeffs: np.ndarray) -> np.ndarray:
    out = terms[0] @ coeffs[0]
    for z, c in zip(terms[1:], coeffs[1:]):
        out = out + z @ c
    return out


def _check(coeffs: np.ndarray, f: np.ndarray, n_terms: int, n: int, name: str) -> None:
    if f.ndim != 2 or f.shape[0] != n:
        raise ShapeMismatchError(name, (n, n), f.shape)
    if coeffs.ndim != 3 or coeffs.shape[0] != n_terms or coeffs.shape[1] != f.shape[1]:
        raise ShapeMismatchError(name, coeffs.shape, (n_terms, f.shape[1], "q_out"))


def chebyshev_terms(op, f: np.ndarray, order: int) -> list[np.ndarray]:
    """``[T_0 f, ..., T_p f]`` via ``T_j = 2 L T_{j-1} - T_{j-2}``."""
    terms = [f]
    if order >= 1:
        terms.append(apply_operator(op, f))
    for _ in range(2, order + 1):
        terms.append(2.0 * apply_operator(op, terms[-1]) - terms[-2])
    return terms


def chebyshev_apply(op, coeffs, f) -> np.ndarray:
    """Univariate Chebyshev filter ``sum_j T_j(L) f theta_j`` (before any nonlinearity)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    _check(coeffs, f, coeffs.shape[0], _operator_size(op), "chebyshev_apply")
    return _mix(chebyshev_terms(op, f, coeffs.shape[0] - 1), coeffs)


def words(k: int, order: int) -> list[tuple[int, ...]]:
    """All words over ``range(k)`` of length 0..order, length first then lexicographic."""
    out: list[tuple[int, ...]] = []
    for length in range(order + 1):
        out.extend(itertools.product(range(k), repeat=length))
    return out


def coefficient_count(k: int, order: int) -> int:
    """Number of words of length <= order over k letters."""
    if k == 1:
        return order + 1
    return (k ** (order + 1) - 1) // (k - 1)


def word_terms(ops, f: np.ndarray, order: int, budget: int = DEFAULT_WORD_BUDGET) -> list[np.ndarray]:
    """``L_{k1} ... L_{kj} f`` for every word, in ``words`` order.

    The leftmost factor is applied last, so each word reuses the product of
    its suffix and costs one operator application.
    """
    k = len(ops)
    count = coefficient_count(k, order)
    if count > budget:
        raise WordBudgetError(f"K={k}, p={order} needs {count} words (budget {budget})")
    cache: dict[tuple[int, ...], np.ndarray] = {(): f}
    for w in words(k, order)[1:]:
        cache[w] = apply_operator(ops[w[0]], cache[w[1:]])
    return [cache[w] for w in words(k, order)]


def multivar_apply(ops, coeffs, f, budget: int = DEFAULT_WORD_BUDGET) -> np.ndarray:
    """General non-commutative polynomial in several operators (monomial basis)."""
    if len(ops) < 1:
        raise ValueError("need at least one operator")
    coeffs = np.asarray(coeffs, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    k = len(ops)
    # solve count = sum_{j<=p} k^j for p
    order, count = 0, 1
    while count < coeffs.shape[0]:
        order += 1
        count = coefficient_count(k, order)
    if count != coeffs.shape[0]:
        raise ShapeMismatchError("multivar_apply", coeffs.shape, (f"sum K^j for K={k}",))
    _check(coeffs, f, count, _operator_size(ops[0]), "multivar_apply")
    return _mix(word_terms(ops, f, order, budget), coeffs)


def motifnet_d_apply(lap_in, lap_out, coeffs, f, budget: int = DEFAULT_WORD_BUDGET) -> np.ndarray:
    """Two-operator polynomial over the incoming/outgoing edge Laplacians."""
    return multivar_apply([lap_in, lap_out], coeffs, f, budget)


def attention_weights(logits) -> np.ndarray:
    """Softmax over the motif axis (axis 0) of attention logits."""
    a = np.asarray(logits, dtype=np.float64)
    e = np.exp(a - a.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def recursive_apply(ops, coeffs, alpha, f) -> np.ndarray:
    """Recursive attention polynomial.

    ``g_0 = f``, ``g_j = sum_k alpha[k, j-1] L_k g_{j-1}``, output
    ``sum_j g_j theta_j``. ``alpha`` is ``(K, p)`` (shared by all channels) or
    ``(K, p, q_out)`` (one recursion per output channel); these are the
    effective weights, e.g. from ``attention_weights``.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    k = len(ops)
    order = coeffs.shape[0] - 1
    _check(coeffs, f, order + 1, _operator_size(ops[0]), "recursive_apply")
    if alpha.shape[:2] != (k, order) or alpha.ndim not in (2, 3):
        raise ShapeMismatchError("recursive_apply", alpha.shape, (k, order))
    if alpha.ndim == 2:
        g = f
        out = g @ coeffs[0]
        for j in range(order):
            g = sum(alpha[m, j] * apply_operator(ops[m], g) for m in range(k))
            out = out + g @ coeffs[j + 1]
        return out
    n, q_in = f.shape
    q_out = coeffs.shape[2]
    if alpha.shape[2] != q_out:
        raise ShapeMismatchError("recursive_apply", alpha.shape, (k, order, q_out))
    # column block l of g carries the recursion for output channel l
    g = np.tile(f, (1, q_out))
    out = f @ coeffs[0]
    for j in range(order):
        g = sum(apply_operator(ops[m], g) * np.repeat(alpha[m, j], q_in) for m in range(k))
        out = out + np.einsum("nlc,cl->nl", g.reshape(n, q_out, q_in), coeffs[j + 1])
    return out
