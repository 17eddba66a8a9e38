"""Dense float64 kernels used by the forward and backward passes.

A matrix here is a 2-D C-contiguous float64 ndarray.  Every operation is
pure except :func:`axpy_in_place`, which callers may apply to a matrix
shared between threads: each scalar ends up written by a single aligned
8-byte store, so concurrent updates can interleave or overwrite each
other but never produce a torn scalar.
"""

from __future__ import annotations

import numpy as np

Matrix = np.ndarray


def as_matrix(data) -> Matrix:
    """Coerce nested sequences / arrays to a 2-D C-contiguous float64 matrix."""
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def gemm(a: Matrix, b: Matrix, transpose_a: bool = False, transpose_b: bool = False) -> Matrix:
    """Dense product op(a) @ op(b), where op optionally transposes.

    Raises ValueError when the inner dimensions (after transposition)
    disagree.  Summation order per output element is fixed by the BLAS
    backend, so results are reproducible for identical inputs.
    """
    lhs = a.T if transpose_a else a
    rhs = b.T if transpose_b else b
    if lhs.shape[1] != rhs.shape[0]:
        raise ValueError(
            f"gemm dimension mismatch: {lhs.shape} x {rhs.shape}"
            f" (transpose_a={transpose_a}, transpose_b={transpose_b})"
        )
    return lhs @ rhs


def sigmoid(m: Matrix) -> Matrix:
    """Elementwise logistic function, stable for large |x|."""
    out = np.empty_like(m, dtype=np.float64)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_deriv_from_output(s: Matrix) -> Matrix:
    """Derivative of the logistic function expressed via its output: s * (1 - s)."""
    return s * (1.0 - s)


def softmax_rows(m: Matrix) -> Matrix:
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def axpy_in_place(target: Matrix, source: Matrix, scale: float) -> None:
    """target += scale * source, elementwise and in place.

    When `target` is shared across threads the per-element read-add-store
    is unsynchronized: concurrent callers may lose each other's updates
    (accepted lock-free noise) but individual float64 stores are atomic.
    """
    if target.shape != source.shape:
        raise ValueError(f"axpy shape mismatch: {target.shape} vs {source.shape}")
    np.add(target, scale * source, out=target)
