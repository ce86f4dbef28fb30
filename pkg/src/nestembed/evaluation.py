"""Evaluators: pair-similarity correlations, triplet ranking accuracy,
dimension sweeps, and the before/after forgetting comparison.

All evaluators score cosine similarity on column-truncated embeddings so a
single trained model can be charted across its nested dimensions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics
from .data import NLI_TRIPLETS, STS_PAIRS, DatasetSplit
from .encoder import EncoderModel, encode_batch

TASK_STS = "sts"
TASK_NLI = "nli_triplet"


class EvalError(ValueError):
    """Evaluation precondition violation (bad dim, incomparable models, ...)."""


@dataclass(frozen=True)
class EvalReport:
    """Per-dimension metric records for one task over one split."""

    task: str
    per_dim: dict  # dim -> {metric name -> value}
    n_records: int

    def __post_init__(self):
        if self.task not in (TASK_STS, TASK_NLI):
            raise EvalError(f"unknown task {self.task!r}")


@dataclass(frozen=True)
class ForgettingReport:
    """Triplet accuracy before and after a later fine-tuning stage."""

    metric_before: float
    metric_after: float

    @property
    def delta(self) -> float:
        return self.metric_after - self.metric_before

    def to_dict(self) -> dict:
        return {
            "metric_before": self.metric_before,
            "metric_after": self.metric_after,
            "delta": self.delta,
        }


def _check_dim(dim: int, full: int) -> None:
    if not 1 <= dim <= full:
        raise EvalError(f"dim {dim} outside [1, {full}]")


def similarity_eval_embeddings(
    emb1: np.ndarray,
    emb2: np.ndarray,
    unit_scores: Sequence[float],
    dim: int | None = None,
) -> dict:
    """Pearson/Spearman between truncated-cosine scores and gold unit scores.

    Entry point for precomputed embeddings from an external model; the
    model-based evaluator below delegates here.
    """
    emb1 = numerics.as_matrix(emb1)
    emb2 = numerics.as_matrix(emb2)
    if emb1.shape != emb2.shape:
        raise EvalError(f"embedding shapes differ: {emb1.shape} vs {emb2.shape}")
    scores = np.asarray(unit_scores, dtype=np.float64)
    if scores.shape != (emb1.shape[0],):
        raise EvalError("one gold score per pair required")
    if emb1.shape[0] < 2:
        raise EvalError("similarity evaluation needs at least 2 pairs")
    if dim is None:
        dim = emb1.shape[1]
    _check_dim(dim, emb1.shape[1])
    cosines = np.empty(emb1.shape[0])
    for i in range(emb1.shape[0]):
        try:
            cosines[i] = numerics.cosine_similarity(emb1[i, :dim], emb2[i, :dim])
        except numerics.ZeroNormError as exc:
            raise EvalError(f"pair {i}: {exc} at dim {dim}") from exc
    return {
        "pearson_cosine": numerics.pearson(cosines, scores),
        "spearman_cosine": numerics.spearman(cosines, scores),
    }


def similarity_eval(model: EncoderModel, pairs: DatasetSplit, dim: int) -> dict:
    """Encode an STS split and correlate truncated cosines with gold scores."""
    if pairs.kind != STS_PAIRS:
        raise EvalError(f"similarity_eval needs an {STS_PAIRS} split")
    _check_dim(dim, model.dim)
    emb1 = encode_batch(model, [r.sentence1 for r in pairs.records])
    emb2 = encode_batch(model, [r.sentence2 for r in pairs.records])
    scores = [r.unit_score for r in pairs.records]
    return similarity_eval_embeddings(emb1, emb2, scores, dim)


def triplet_eval_embeddings(
    anchors: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    dim: int | None = None,
) -> float:
    """Fraction of rows where cosine(anchor, positive) strictly beats
    cosine(anchor, negative) at the truncated dimension. Ties count as
    failures."""
    anchors = numerics.as_matrix(anchors)
    positives = numerics.as_matrix(positives)
    negatives = numerics.as_matrix(negatives)
    if not (anchors.shape == positives.shape == negatives.shape):
        raise EvalError("anchor/positive/negative shapes differ")
    if dim is None:
        dim = anchors.shape[1]
    _check_dim(dim, anchors.shape[1])
    wins = 0
    for i in range(anchors.shape[0]):
        try:
            c_pos = numerics.cosine_similarity(anchors[i, :dim], positives[i, :dim])
            c_neg = numerics.cosine_similarity(anchors[i, :dim], negatives[i, :dim])
        except numerics.ZeroNormError as exc:
            raise EvalError(f"record {i}: {exc} at dim {dim}") from exc
        if c_pos > c_neg:
            wins += 1
    return wins / anchors.shape[0]


def triplet_eval(model: EncoderModel, triplets: DatasetSplit, dim: int) -> float:
    """Triplet ranking accuracy of a model on an NLI split with negatives."""
    if triplets.kind != NLI_TRIPLETS:
        raise EvalError(f"triplet_eval needs an {NLI_TRIPLETS} split")
    if not triplets.has_negatives:
        raise EvalError("triplet evaluation needs a negative for every record")
    _check_dim(dim, model.dim)
    anchors = encode_batch(model, [r.anchor for r in triplets.records])
    positives = encode_batch(model, [r.positive for r in triplets.records])
    negatives = encode_batch(model, [r.negative for r in triplets.records])
    return triplet_eval_embeddings(anchors, positives, negatives, dim)


def dimension_sweep(
    model: EncoderModel, split: DatasetSplit, dims: Sequence[int]
) -> EvalReport:
    """Run the task-appropriate evaluator at each dim plus the full dimension."""
    wanted = sorted(set(int(d) for d in dims) | {model.dim})
    for d in wanted:
        _check_dim(d, model.dim)
    per_dim = {}
    if split.kind == STS_PAIRS:
        task = TASK_STS
        for d in wanted:
            per_dim[d] = similarity_eval(model, split, d)
    else:
        task = TASK_NLI
        for d in wanted:
            per_dim[d] = {"cosine_accuracy": triplet_eval(model, split, d)}
    return EvalReport(task=task, per_dim=per_dim, n_records=len(split))


def forgetting_report(
    model_before: EncoderModel,
    model_after: EncoderModel,
    nli_split: DatasetSplit,
    dim: int,
) -> ForgettingReport:
    """Triplet accuracy of two checkpoints on the same split, plus the delta.

    The checkpoints must share tokenizer and dimension, otherwise their
    accuracies are not comparable.
    """
    if model_before.tokenizer != model_after.tokenizer:
        raise EvalError("models not comparable: vocabularies differ")
    if model_before.dim != model_after.dim:
        raise EvalError(
            "models not comparable: dimensions differ "
            f"({model_before.dim} vs {model_after.dim})"
        )
    before = triplet_eval(model_before, nli_split, dim)
    after = triplet_eval(model_after, nli_split, dim)
    return ForgettingReport(metric_before=before, metric_after=after)


# Report serialization: one JSONL record per dimension, plus an aligned
# human-readable table with the canonical column names.

_COLUMNS = {
    TASK_NLI: ["Cosine Accuracy"],
    TASK_STS: ["Pearson Cosine", "Spearman Cosine"],
}
_KEYS = {
    TASK_NLI: ["cosine_accuracy"],
    TASK_STS: ["pearson_cosine", "spearman_cosine"],
}


def report_to_jsonl(report: EvalReport, model_name: str, max_seq_length: int) -> str:
    lines = []
    for d in sorted(report.per_dim):
        row = {
            "model": model_name,
            "max_seq_length": max_seq_length,
            "embedding_dimension": d,
            "task": report.task,
            "n_records": report.n_records,
        }
        row.update({k: report.per_dim[d][k] for k in _KEYS[report.task]})
        lines.append(json.dumps(row))
    return "\n".join(lines) + "\n"


def report_to_table(report: EvalReport, model_name: str, max_seq_length: int) -> str:
    headers = ["Model", "Max Seq Length", "Embedding Dimension"] + _COLUMNS[
        report.task
    ]
    rows = []
    for d in sorted(report.per_dim):
        metrics = [f"{report.per_dim[d][k]:.4f}" for k in _KEYS[report.task]]
        rows.append([model_name, str(max_seq_length), str(d)] + metrics)
    widths = [
        max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)
    ]
    def fmt(row):
        return "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
    ruler = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(headers), ruler] + [fmt(r) for r in rows]) + "\n"
