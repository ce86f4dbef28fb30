"""A tiny trainable sentence encoder: lookup table + mean pooling.

The encoder is deliberately linear (an embedding bag), which keeps the
backward pass a dozen lines and makes finite-difference verification of
the full training stack cheap and exact. Checkpoints round-trip bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

UNK_TOKEN = "<unk>"

CHECKPOINT_MAGIC = b"NSTEMB01"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, truncated, or inconsistent checkpoint file."""


class DivergenceError(ValueError):
    """Non-finite gradients or parameters: training has diverged."""


@dataclass(frozen=True)
class Tokenizer:
    """Lowercasing whitespace tokenizer over a fixed vocabulary."""

    vocab: dict  # token -> dense id, includes UNK_TOKEN
    unk_id: int
    max_seq_length: int

    def __post_init__(self):
        if self.max_seq_length < 1:
            raise ValueError("max_seq_length must be >= 1")
        ids = sorted(self.vocab.values())
        if ids != list(range(len(self.vocab))):
            raise ValueError("vocabulary ids must be dense 0..vocab_size-1")
        if not 0 <= self.unk_id < len(self.vocab):
            raise ValueError("unk_id outside vocabulary")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def id_to_token(self) -> list:
        """Token list in id order (used by the checkpoint writer)."""
        out = [None] * len(self.vocab)
        for tok, idx in self.vocab.items():
            out[idx] = tok
        return out


def build_tokenizer(texts: Sequence[str], max_seq_length: int) -> Tokenizer:
    """Vocabulary = sorted distinct lowercase whitespace tokens, plus unk at 0."""
    tokens = set()
    for text in texts:
        tokens.update(text.lower().split())
    tokens.discard(UNK_TOKEN)
    vocab = {UNK_TOKEN: 0}
    for i, tok in enumerate(sorted(tokens), start=1):
        vocab[tok] = i
    return Tokenizer(vocab=vocab, unk_id=0, max_seq_length=max_seq_length)


def tokenize(tokenizer: Tokenizer, text: str) -> list:
    """Lowercase, split on whitespace, map to ids, truncate.

    Total function: unknown tokens map to unk_id and empty text yields a
    single unk token so every sentence has at least one pooled row.
    """
    ids = [
        tokenizer.vocab.get(tok, tokenizer.unk_id) for tok in text.lower().split()
    ]
    if not ids:
        return [tokenizer.unk_id]
    return ids[: tokenizer.max_seq_length]


@dataclass
class EncoderModel:
    """Mean-pooling embedding-bag encoder; the table is the only parameter."""

    embedding_table: np.ndarray  # vocab_size x dim, float64
    tokenizer: Tokenizer

    def __post_init__(self):
        self.embedding_table = np.ascontiguousarray(
            self.embedding_table, dtype=np.float64
        )
        if self.embedding_table.ndim != 2 or self.embedding_table.shape[1] < 1:
            raise ValueError("embedding table must be 2-D with at least one column")
        if self.embedding_table.shape[0] != self.tokenizer.vocab_size:
            raise ValueError(
                f"table rows {self.embedding_table.shape[0]} != vocab size "
                f"{self.tokenizer.vocab_size}"
            )
        if not np.isfinite(self.embedding_table).all():
            raise DivergenceError("embedding table contains non-finite values")

    @property
    def dim(self) -> int:
        return self.embedding_table.shape[1]


def init_model(tokenizer: Tokenizer, dim: int, seed: int) -> EncoderModel:
    """Fresh model with uniform [-0.1, 0.1] entries drawn from the run seed."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.1, 0.1, size=(tokenizer.vocab_size, dim))
    return EncoderModel(embedding_table=table, tokenizer=tokenizer)


def encode_batch(model: EncoderModel, texts: Sequence[str]) -> np.ndarray:
    """Mean of the table rows for each sentence's token ids, shape B x dim.

    Rows are not length-normalized; losses and evaluators normalize via
    cosine where they need to.
    """
    if len(texts) == 0:
        raise ValueError("encode_batch needs at least one text")
    out = np.empty((len(texts), model.dim), dtype=np.float64)
    table = model.embedding_table
    for i, text in enumerate(texts):
        ids = tokenize(model.tokenizer, text)
        out[i] = table[ids].mean(axis=0)
    return out


def encode_backward(
    model: EncoderModel, texts: Sequence[str], upstream: np.ndarray
) -> np.ndarray:
    """Gradient of sum_i <upstream_i, encode(texts)_i> w.r.t. the table.

    Each token occurrence in sentence i contributes upstream_i / n_tokens_i
    to its row; duplicate occurrences accumulate.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (len(texts), model.dim):
        raise ValueError(
            f"upstream shape {upstream.shape} != ({len(texts)}, {model.dim})"
        )
    grad = np.zeros_like(model.embedding_table)
    for i, text in enumerate(texts):
        ids = tokenize(model.tokenizer, text)
        np.add.at(grad, ids, upstream[i] / len(ids))
    return grad


@dataclass
class AdamState:
    """First/second moment accumulators for a single parameter array."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(param_shape) -> AdamState:
    return AdamState(
        first_moment=np.zeros(param_shape, dtype=np.float64),
        second_moment=np.zeros(param_shape, dtype=np.float64),
    )


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float
) -> None:
    """In-place Adam update with bias-corrected moments."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if grads.shape != params.shape or state.first_moment.shape != params.shape:
        raise ValueError("parameter/gradient/moment shapes disagree")
    if not np.isfinite(grads).all():
        raise DivergenceError("non-finite gradient entries")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    state.first_moment *= b1
    state.first_moment += (1 - b1) * grads
    state.second_moment *= b2
    state.second_moment += (1 - b2) * grads * grads
    m_hat = state.first_moment / (1 - b1**t)
    v_hat = state.second_moment / (1 - b2**t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.isfinite(params).all():
        raise DivergenceError("non-finite parameters after optimizer step")


@dataclass(frozen=True)
class Schedule:
    """Linear warmup to peak_lr, then linear decay to zero."""

    peak_lr: float
    total_steps: int
    warmup_steps: int

    def __post_init__(self):
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("need 0 <= warmup_steps <= total_steps")

    @classmethod
    def from_warmup_ratio(
        cls, peak_lr: float, total_steps: int, warmup_ratio: float
    ) -> "Schedule":
        if not 0.0 <= warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must be in [0, 1]")
        return cls(peak_lr, total_steps, int(round(warmup_ratio * total_steps)))


def lr_at(schedule: Schedule, step: int) -> float:
    """Learning rate at an integer step in [0, total_steps]."""
    if step < 0 or step > schedule.total_steps:
        raise ValueError(
            f"step {step} outside [0, {schedule.total_steps}]"
        )
    if schedule.warmup_steps > 0 and step <= schedule.warmup_steps:
        return schedule.peak_lr * step / schedule.warmup_steps
    return (
        schedule.peak_lr
        * (schedule.total_steps - step)
        / (schedule.total_steps - schedule.warmup_steps)
    )


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def save_checkpoint(model: EncoderModel, path: str | Path) -> None:
    """Binary checkpoint: magic, version, vocab in id order, dims, params.

    Parameters are little-endian float64 in row-major order; load() of the
    result reproduces the model bit-exactly. The write goes through a temp
    file and rename so a crash never leaves a half-written checkpoint.
    """
    path = Path(path)
    tok = model.tokenizer
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    tokens = tok.id_to_token()
    parts.append(struct.pack("<I", len(tokens)))
    for token in tokens:
        raw = token.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    parts.append(
        struct.pack("<III", tok.unk_id, model.dim, tok.max_seq_length)
    )
    parts.append(np.ascontiguousarray(model.embedding_table, dtype="<f8").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> EncoderModel:
    """Read a checkpoint written by save_checkpoint; strict about format."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic bytes {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (n_tokens,) = struct.unpack("<I", _read_exact(fh, 4))
        tokens = []
        for _ in range(n_tokens):
            (nbytes,) = struct.unpack("<I", _read_exact(fh, 4))
            tokens.append(_read_exact(fh, nbytes).decode("utf-8"))
        unk_id, dim, max_seq_length = struct.unpack("<III", _read_exact(fh, 12))
        payload = fh.read()
    expected = n_tokens * dim * 8
    if len(payload) < expected:
        raise CheckpointError(
            f"parameter payload has {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise CheckpointError("trailing bytes after parameter payload")
    table = np.frombuffer(payload, dtype="<f8").reshape(n_tokens, dim).copy()
    if len(set(tokens)) != len(tokens):
        raise CheckpointError("duplicate tokens in vocabulary")
    vocab = {tok: i for i, tok in enumerate(tokens)}
    try:
        tokenizer = Tokenizer(
            vocab=vocab, unk_id=unk_id, max_seq_length=max_seq_length
        )
        return EncoderModel(embedding_table=table, tokenizer=tokenizer)
    except ValueError as exc:
        raise CheckpointError(f"inconsistent checkpoint: {exc}") from exc
