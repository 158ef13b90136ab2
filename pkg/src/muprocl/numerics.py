"""Small dense numeric kernels shared by the whole engine.

Vectors and matrices are float64 numpy arrays; `as_vector` / `as_matrix`
validate shape and finiteness at module boundaries. Both `log_sum_exp` and
`softmax` use max-shift stabilization so inner products of any realistic
magnitude never overflow.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError

Vector = np.ndarray
Matrix = np.ndarray


def as_vector(data) -> Vector:
    """Validate and return a finite 1-D float64 vector."""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise InputError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise InputError("empty vector")
    if not np.all(np.isfinite(v)):
        raise InputError("vector contains non-finite entries")
    return v


def as_matrix(data) -> Matrix:
    """Validate and return a finite 2-D float64 matrix."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.size == 0:
        raise InputError("empty matrix")
    if not np.all(np.isfinite(m)):
        raise InputError("matrix contains non-finite entries")
    return m


def dot(a, b) -> float:
    """Inner product of two equal-length vectors."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def log_sum_exp(values) -> float:
    """Stable log(sum(exp(values))) via max-shift."""
    v = as_vector(values)
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def log_sum_exp_rows(m: Matrix) -> Vector:
    """Row-wise stable LSE for a 2-D array (batched kernel)."""
    m = np.asarray(m, dtype=np.float64)
    shift = np.max(m, axis=1, keepdims=True)
    return (shift[:, 0] + np.log(np.sum(np.exp(m - shift), axis=1)))


def softmax(values) -> Vector:
    """Stable softmax; output entries are positive and sum to 1."""
    v = as_vector(values)
    e = np.exp(v - np.max(v))
    return e / np.sum(e)


def softmax_rows(m: Matrix) -> Matrix:
    """Row-wise stable softmax for a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    e = np.exp(m - np.max(m, axis=1, keepdims=True))
    return e / np.sum(e, axis=1, keepdims=True)


def norm(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))


def normalize(v) -> Vector:
    """Return v / ||v||; zero-norm input is rejected."""
    v = as_vector(v)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise InputError("cannot normalize a zero-norm vector")
    return v / n


def cosine(a, b) -> float:
    """Cosine similarity; both inputs must have nonzero norm."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise InputError("cosine undefined for zero-norm input")
    return float(a @ b) / (na * nb)
