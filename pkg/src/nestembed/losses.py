"""Ranking losses over embedding batches, with analytic gradients.

Three losses: in-batch-negatives softmax ranking (over scaled cosines),
pairwise order-consistency ranking for scored pairs, and a nesting wrapper
that sums a base loss over truncated prefixes of the embedding dimension.
Every loss returns its value together with exact gradients with respect to
each input embedding matrix, verified by the finite-difference harness at
the bottom of this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .numerics import NonFiniteError, ZeroNormError, as_matrix

DEFAULT_SCALE = 20.0


@dataclass(frozen=True)
class LossOutput:
    """Scalar loss plus one gradient matrix per input embedding matrix."""

    value: float
    grads: tuple

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NonFiniteError("loss value is not finite")
        if self.value < 0.0:
            raise ValueError(f"loss value must be non-negative, got {self.value}")


@dataclass(frozen=True)
class MatryoshkaSpec:
    """Truncation dimensions and their weights for the nesting wrapper."""

    dims: tuple
    weights: tuple = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("dims must be nonempty")
        if any(d < 1 for d in dims):
            raise ValueError("dims must be positive")
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise ValueError(f"dims must be strictly increasing, got {dims}")
        weights = self.weights
        if weights is None:
            weights = tuple(1.0 for _ in dims)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(dims):
            raise ValueError("weights must match dims in length")
        if any(w <= 0 for w in weights):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "weights", weights)


def _checked_rows(m: np.ndarray, name: str) -> np.ndarray:
    """Row norms of a matrix, rejecting zero-norm rows by index."""
    norms = np.linalg.norm(m, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroNormError(f"{name} has zero-norm row {int(zero[0])}")
    return norms


def _row_lse(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable log-sum-exp."""
    m = logits.max(axis=1)
    return m + np.log(np.exp(logits - m[:, None]).sum(axis=1))


def mnrl_loss(
    anchors,
    positives,
    negatives=None,
    scale: float = DEFAULT_SCALE,
) -> LossOutput:
    """Softmax cross-entropy over scaled anchor-candidate cosines.

    Candidates for every anchor are all positive rows, plus all negative
    rows when given; the target for anchor i is candidate i. Gradients are
    exact through the cosine normalization. Returned grads follow the
    input order: (anchors, positives[, negatives]).
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    anchors = as_matrix(anchors)
    positives = as_matrix(positives)
    if anchors.shape != positives.shape:
        raise ValueError(
            f"anchors {anchors.shape} and positives {positives.shape} differ"
        )
    b = anchors.shape[0]
    if negatives is not None:
        negatives = as_matrix(negatives)
        if negatives.shape != anchors.shape:
            raise ValueError(
                f"negatives {negatives.shape} must match anchors {anchors.shape}"
            )
        candidates = np.vstack([positives, negatives])
    else:
        candidates = positives

    un = _checked_rows(anchors, "anchors")
    vn = _checked_rows(candidates, "candidates")
    uh = anchors / un[:, None]
    vh = candidates / vn[:, None]
    cos = uh @ vh.T  # b x m
    logits = scale * cos

    lse = _row_lse(logits)
    target = logits[np.arange(b), np.arange(b)]
    value = float((lse - target).mean())

    # d value / d logits = (softmax - onehot) / b
    probs = np.exp(logits - lse[:, None])
    g = probs.copy()
    g[np.arange(b), np.arange(b)] -= 1.0
    g *= scale / b
    gc = g * cos
    d_anchors = (g @ vh - gc.sum(axis=1)[:, None] * uh) / un[:, None]
    d_candidates = (g.T @ uh - gc.sum(axis=0)[:, None] * vh) / vn[:, None]

    if negatives is not None:
        return LossOutput(value, (d_anchors, d_candidates[:b], d_candidates[b:]))
    return LossOutput(value, (d_anchors, d_candidates))


def cosent_loss(
    emb1,
    emb2,
    labels,
    scale: float = DEFAULT_SCALE,
) -> LossOutput:
    """Pairwise cosine-order consistency loss for scored sentence pairs.

    With c_i the cosine of pair i, every ordered index pair whose gold
    labels satisfy label_i > label_j contributes exp(scale * (c_j - c_i));
    the loss is log(1 + sum of contributions), realized as log-sum-exp over
    the pair terms plus an implicit zero logit, so it is overflow-free and
    exactly zero when no pair is ordered.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    emb1 = as_matrix(emb1)
    emb2 = as_matrix(emb2)
    if emb1.shape != emb2.shape:
        raise ValueError(f"emb1 {emb1.shape} and emb2 {emb2.shape} differ")
    labels = np.asarray(labels, dtype=np.float64)
    n = emb1.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} must be ({n},)")
    if not np.isfinite(labels).all():
        raise NonFiniteError("labels contain non-finite entries")
    if labels.min() < 0.0 or labels.max() > 1.0:
        raise ValueError("labels must be unit scores in [0, 1]")

    un = _checked_rows(emb1, "emb1")
    vn = _checked_rows(emb2, "emb2")
    uh = emb1 / un[:, None]
    vh = emb2 / vn[:, None]
    cos = (uh * vh).sum(axis=1)

    ordered = labels[:, None] > labels[None, :]
    z = scale * (cos[None, :] - cos[:, None])  # z[i, j] pairs label_i > label_j
    terms = z[ordered]

    m = max(0.0, float(terms.max())) if terms.size else 0.0
    denom = math.exp(-m) + float(np.exp(terms - m).sum()) if terms.size else 1.0
    value = m + math.log(denom)

    # softmax weight of each pair term inside the log-sum-exp
    pair_w = np.zeros((n, n), dtype=np.float64)
    if terms.size:
        pair_w[ordered] = np.exp(terms - m) / denom
    # d value / d cos_k: +scale for every pair where k is the j side,
    # -scale where k is the i side
    g = scale * (pair_w.sum(axis=0) - pair_w.sum(axis=1))

    d_emb1 = g[:, None] * (vh - cos[:, None] * uh) / un[:, None]
    d_emb2 = g[:, None] * (uh - cos[:, None] * vh) / vn[:, None]
    return LossOutput(value, (d_emb1, d_emb2))


def matryoshka_wrap(
    base_loss: Callable[..., LossOutput],
    embeddings: Sequence[np.ndarray],
    spec: MatryoshkaSpec,
    **base_kwargs,
) -> LossOutput:
    """Weighted sum of a base loss over column-prefix truncations.

    For each dim d, every embedding matrix is truncated to its first d
    columns and the base loss evaluated on the truncations; truncated
    gradients are zero-padded back to full width and accumulated with the
    dim's weight. Non-embedding inputs (labels, scale) pass through.
    """
    mats = [as_matrix(m) for m in embeddings]
    full = min(m.shape[1] for m in mats)
    too_big = [d for d in spec.dims if d > full]
    if too_big:
        raise ValueError(
            f"truncation dim {too_big[0]} exceeds embedding dimension {full}"
        )
    value = 0.0
    grads = [np.zeros_like(m) for m in mats]
    for d, w in zip(spec.dims, spec.weights):
        out = base_loss(*(m[:, :d] for m in mats), **base_kwargs)
        value += w * out.value
        for acc, g in zip(grads, out.grads):
            acc[:, :d] += w * g
    return LossOutput(value, tuple(grads))


def finite_difference_check(
    loss_fn: Callable[..., LossOutput],
    matrices: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    Perturbs every entry of every input matrix by +/- eps. The relative
    error of an entry is |analytic - numeric| / max(1e-12, |analytic| +
    |numeric|); the max over all entries is returned.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mats = [np.array(m, dtype=np.float64) for m in matrices]
    base = loss_fn(*mats)
    if len(base.grads) != len(mats):
        raise ValueError("loss returned a gradient count != input matrix count")
    worst = 0.0
    for k, m in enumerate(mats):
        analytic = base.grads[k]
        for idx in np.ndindex(m.shape):
            orig = m[idx]
            m[idx] = orig + eps
            f_plus = loss_fn(*mats).value
            m[idx] = orig - eps
            f_minus = loss_fn(*mats).value
            m[idx] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NonFiniteError("loss became non-finite under perturbation")
            numeric = (f_plus - f_minus) / (2 * eps)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst


def _random_embeddings(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Gaussian rows rescaled to norms in [0.5, 2] so cosine stays well-conditioned."""
    m = rng.normal(size=(rows, cols))
    norms = np.linalg.norm(m, axis=1)
    return m * (rng.uniform(0.5, 2.0, size=rows) / norms)[:, None]


def _gradcheck_dims(d: int) -> MatryoshkaSpec:
    dims = sorted({max(1, d // 3), max(1, (2 * d) // 3), d})
    return MatryoshkaSpec(dims=tuple(dims))


def gradcheck_suite(
    instances: int = 20, seed: int = 0, eps: float = 1e-5
) -> dict:
    """Finite-difference sweep over random instances of every loss.

    Returns the max relative gradient error per suite. Scales are kept in
    a moderate range so the softmax does not saturate into gradients below
    the finite-difference noise floor.
    """
    rng = np.random.default_rng(seed)
    worst = {
        "mnrl": 0.0,
        "cosent": 0.0,
        "matryoshka_mnrl": 0.0,
        "matryoshka_cosent": 0.0,
    }
    for k in range(instances):
        b = int(rng.integers(2, 7))
        d = int(rng.integers(2, 17))
        scale = float(rng.uniform(0.5, 4.0))
        spec = _gradcheck_dims(d)

        mats = [_random_embeddings(rng, b, d) for _ in range(3 if k % 2 else 2)]
        mnrl_fn = lambda *m: mnrl_loss(*m, scale=scale)
        worst["mnrl"] = max(worst["mnrl"], finite_difference_check(mnrl_fn, mats, eps))
        wrap_fn = lambda *m: matryoshka_wrap(mnrl_loss, m, spec, scale=scale)
        worst["matryoshka_mnrl"] = max(
            worst["matryoshka_mnrl"], finite_difference_check(wrap_fn, mats, eps)
        )

        n = int(rng.integers(2, 7))
        pair = [_random_embeddings(rng, n, d) for _ in range(2)]
        labels = rng.uniform(0.0, 1.0, size=n)
        cosent_fn = lambda *m: cosent_loss(*m, labels=labels, scale=scale)
        worst["cosent"] = max(
            worst["cosent"], finite_difference_check(cosent_fn, pair, eps)
        )
        cosent_wrap = lambda *m: matryoshka_wrap(
            cosent_loss, m, spec, labels=labels, scale=scale
        )
        worst["matryoshka_cosent"] = max(
            worst["matryoshka_cosent"], finite_difference_check(cosent_wrap, pair, eps)
        )
    return worst
