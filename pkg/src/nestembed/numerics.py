"""Vector and statistics kernels shared by every other module.

All computation is float64. Inputs are validated at the public boundary:
finite entries only, and shape/length preconditions raise structured errors
instead of propagating NaNs downstream.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class NumericsError(ValueError):
    """Base class for numeric precondition violations."""


class DimensionMismatchError(NumericsError):
    """Operands do not have compatible shapes or lengths."""


class ZeroNormError(NumericsError):
    """A vector (or matrix row) has zero Euclidean norm."""


class ConstantInputError(NumericsError):
    """A correlation input has zero variance, so the statistic is undefined."""


class NonFiniteError(NumericsError):
    """An input contains NaN or infinity."""


class EmptyInputError(NumericsError):
    """An input sequence is empty or too short for the operation."""


def as_vector(values) -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise EmptyInputError("vector must have at least one entry")
    if not np.isfinite(v).all():
        raise NonFiniteError("vector contains non-finite entries")
    return v


def as_matrix(values) -> np.ndarray:
    """Coerce to a finite 2-D float64 array with positive row/column counts."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise EmptyInputError(f"matrix must be non-empty, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise NonFiniteError("matrix contains non-finite entries")
    return m


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Raises ZeroNormError for a degenerate (all-zero) vector and
    DimensionMismatchError when lengths differ.
    """
    u = as_vector(u)
    v = as_vector(v)
    if u.shape[0] != v.shape[0]:
        raise DimensionMismatchError(
            f"vector dimensions differ: {u.shape[0]} vs {v.shape[0]}"
        )
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0:
        raise ZeroNormError("first vector has zero norm")
    if nv == 0.0:
        raise ZeroNormError("second vector has zero norm")
    sim = float(np.dot(u, v)) / (nu * nv)
    # Clamp so downstream ordering/acos never sees 1 + epsilon.
    return min(1.0, max(-1.0, sim))


def pairwise_cosine(a, b) -> np.ndarray:
    """All-pairs cosine similarity between the rows of two matrices.

    Entry (i, j) is bitwise-equal to cosine_similarity(a[i], b[j]); the
    implementation is deliberately the scalar loop so no vectorized
    rounding path can diverge from the per-entry contract.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    for name, m in (("first", a), ("second", b)):
        norms = np.linalg.norm(m, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroNormError(f"{name} matrix has zero-norm row {int(zero[0])}")
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = cosine_similarity(a[i], b[j])
    return out


def _centered(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = as_vector(x)
    y = as_vector(y)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatchError(
            f"sequence lengths differ: {x.shape[0]} vs {y.shape[0]}"
        )
    if x.shape[0] < 2:
        raise EmptyInputError("correlation needs at least 2 points")
    return x - x.mean(), y - y.mean()


def pearson(x, y) -> float:
    """Sample Pearson correlation via mean-subtracted dot products.

    The sample/population normalization cancels, so only centered dot
    products appear. Zero variance in either argument is an error.
    """
    xc, yc = _centered(x, y)
    ssx = float(np.dot(xc, xc))
    ssy = float(np.dot(yc, yc))
    if ssx == 0.0 or ssy == 0.0:
        raise ConstantInputError("correlation undefined for a constant sequence")
    r = float(np.dot(xc, yc)) / np.sqrt(ssx * ssy)
    return min(1.0, max(-1.0, r))


def average_ranks(x) -> np.ndarray:
    """1-based fractional ranks; tied values receive the mean of their ranks.

    Example: [1, 2, 2, 3] -> [1.0, 2.5, 2.5, 4.0].
    """
    x = as_vector(x)
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        # positions i..j (0-based) share the average of 1-based ranks i+1..j+1
        avg = (i + j + 2) / 2.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson on average-fractional ranks."""
    rx = average_ranks(x)
    ry = average_ranks(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise ConstantInputError("ranks are constant; spearman undefined")
    return pearson(rx, ry)


def log_sum_exp(xs: Sequence[float]) -> float:
    """Overflow-safe log(sum(exp(xs))) for a nonempty finite sequence."""
    v = np.asarray(xs, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise EmptyInputError("log_sum_exp needs a nonempty 1-D sequence")
    if not np.isfinite(v).all():
        raise NonFiniteError("log_sum_exp input contains non-finite entries")
    m = float(v.max())
    return m + float(np.log(np.exp(v - m).sum()))
