"""Two-stage sequential training orchestration and the throughput benchmark.

Stage 1 trains a fresh encoder on NLI triplets with the in-batch-negatives
ranking loss; stage 2 continues from the stage-1 checkpoint on scored STS
pairs with the pairwise order loss. Both stages run inside the nesting
wrapper so truncated prefixes of the embedding stay usable. Runs are a
pure function of (config, seed): repeating one reproduces its checkpoints
bit for bit.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation
from .data import (
    NLI_TRIPLETS,
    STS_PAIRS,
    DatasetSplit,
    load_split,
    shuffled_batches,
)
from .encoder import (
    EncoderModel,
    Schedule,
    adam_step,
    build_tokenizer,
    encode_backward,
    encode_batch,
    init_adam,
    init_model,
    load_checkpoint,
    lr_at,
    save_checkpoint,
)
from .losses import MatryoshkaSpec, cosent_loss, matryoshka_wrap, mnrl_loss

logger = logging.getLogger("nestembed")

LOSS_MNRL = "mnrl"
LOSS_COSENT = "cosent"


class ConfigError(ValueError):
    """Bad key, value, or missing requirement in a run configuration."""


class OutputDirLockedError(RuntimeError):
    """Another run owns the output directory."""


class PipelineError(RuntimeError):
    """A stage failed; the partial-artifact manifest path is attached."""

    def __init__(self, message: str, manifest_path: str | None = None):
        super().__init__(message)
        self.manifest_path = manifest_path


@dataclass(frozen=True)
class StageConfig:
    """One fine-tuning stage: dataset paths plus optimization knobs."""

    train_path: str
    dev_path: str
    batch_size: int = 8
    epochs: int = 5
    peak_lr: float = 1e-2
    warmup_ratio: float = 0.1
    scale: float = 20.0
    select_best: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be positive")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ConfigError("warmup_ratio must be in [0, 1]")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Everything a two-stage run needs; see parse_config for the file keys."""

    stage1: StageConfig
    stage2: StageConfig
    output_dir: str
    seed: int = 42
    encoder_dim: int = 16
    max_seq_length: int = 64
    matryoshka: MatryoshkaSpec = field(
        default_factory=lambda: MatryoshkaSpec(dims=(4, 8, 16))
    )

    def __post_init__(self):
        if self.encoder_dim < 1:
            raise ConfigError("encoder.dim must be >= 1")
        if self.max_seq_length < 1:
            raise ConfigError("encoder.max_seq_length must be >= 1")
        if max(self.matryoshka.dims) > self.encoder_dim:
            raise ConfigError(
                f"matryoshka dim {max(self.matryoshka.dims)} exceeds encoder.dim "
                f"{self.encoder_dim}"
            )


_STAGE_KEYS = {
    "batch_size": int,
    "epochs": int,
    "peak_lr": float,
    "warmup_ratio": float,
    "scale": float,
    "select_best": None,  # bool, parsed specially
}


def _parse_bool(raw: str, key: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"key {key}: expected a boolean, got {raw!r}")


def parse_config(text: str) -> RunConfig:
    """Parse the flat `key = value` run-config format.

    Dotted keys select sections (stage1.batch_size, matryoshka.dims);
    comma-separated lists carry the truncation dims and weights. Unknown
    keys are rejected so typos cannot silently fall back to defaults.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key or not val:
            raise ConfigError(f"config line {lineno}: empty key or value")
        if key in values:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = val

    def take(key, default=None):
        return values.pop(key, default)

    def take_typed(key, typ, default):
        raw = values.pop(key, None)
        if raw is None:
            return default
        try:
            return typ(raw)
        except ValueError as exc:
            raise ConfigError(f"key {key}: {exc}") from exc

    def stage(prefix: str, train_key: str, dev_key: str) -> StageConfig:
        train_path = take(f"{prefix}.{train_key}")
        dev_path = take(f"{prefix}.{dev_key}")
        if train_path is None or dev_path is None:
            raise ConfigError(
                f"missing required keys {prefix}.{train_key} / {prefix}.{dev_key}"
            )
        kwargs = {"train_path": train_path, "dev_path": dev_path}
        defaults = StageConfig(train_path="-", dev_path="-")
        for name, typ in _STAGE_KEYS.items():
            raw = take(f"{prefix}.{name}")
            if raw is None:
                kwargs[name] = getattr(defaults, name)
            elif typ is None:
                kwargs[name] = _parse_bool(raw, f"{prefix}.{name}")
            else:
                try:
                    kwargs[name] = typ(raw)
                except ValueError as exc:
                    raise ConfigError(f"key {prefix}.{name}: {exc}") from exc
        return StageConfig(**kwargs)

    output_dir = take("output_dir")
    if output_dir is None:
        raise ConfigError("missing required key output_dir")
    seed = take_typed("seed", int, 42)
    dim = take_typed("encoder.dim", int, 16)
    max_seq = take_typed("encoder.max_seq_length", int, 64)
    dims_raw = take("matryoshka.dims", "4,8,16")
    weights_raw = take("matryoshka.weights")
    try:
        dims = tuple(int(d.strip()) for d in dims_raw.split(","))
        weights = (
            tuple(float(w.strip()) for w in weights_raw.split(","))
            if weights_raw is not None
            else None
        )
        spec = MatryoshkaSpec(dims=dims, weights=weights)
    except ValueError as exc:
        raise ConfigError(f"matryoshka spec: {exc}") from exc
    stage1 = stage("stage1", "nli_train_path", "nli_dev_path")
    stage2 = stage("stage2", "sts_train_path", "sts_dev_path")
    if values:
        raise ConfigError(f"unknown config keys: {sorted(values)}")
    return RunConfig(
        stage1=stage1,
        stage2=stage2,
        output_dir=output_dir,
        seed=seed,
        encoder_dim=dim,
        max_seq_length=max_seq,
        matryoshka=spec,
    )


def serialize_config(cfg: RunConfig) -> str:
    """Render the effective config; parse_config(serialize_config(c)) == c."""
    lines = [
        f"seed = {cfg.seed}",
        f"output_dir = {cfg.output_dir}",
        f"encoder.dim = {cfg.encoder_dim}",
        f"encoder.max_seq_length = {cfg.max_seq_length}",
        "matryoshka.dims = " + ",".join(str(d) for d in cfg.matryoshka.dims),
        "matryoshka.weights = " + ",".join(repr(w) for w in cfg.matryoshka.weights),
    ]
    for prefix, st, train_key, dev_key in (
        ("stage1", cfg.stage1, "nli_train_path", "nli_dev_path"),
        ("stage2", cfg.stage2, "sts_train_path", "sts_dev_path"),
    ):
        lines.append(f"{prefix}.{train_key} = {st.train_path}")
        lines.append(f"{prefix}.{dev_key} = {st.dev_path}")
        lines.append(f"{prefix}.batch_size = {st.batch_size}")
        lines.append(f"{prefix}.epochs = {st.epochs}")
        lines.append(f"{prefix}.peak_lr = {st.peak_lr!r}")
        lines.append(f"{prefix}.warmup_ratio = {st.warmup_ratio!r}")
        lines.append(f"{prefix}.scale = {st.scale!r}")
        lines.append(f"{prefix}.select_best = {'true' if st.select_best else 'false'}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _n_batches(split: DatasetSplit, batch_size: int) -> int:
    n, rem = divmod(len(split), batch_size)
    count = n + (1 if rem else 0)
    if split.kind == NLI_TRIPLETS and rem == 1:
        count -= 1
    return count


def _dev_metric(model: EncoderModel, dev: DatasetSplit) -> float:
    if dev.kind == NLI_TRIPLETS:
        return evaluation.triplet_eval(model, dev, model.dim)
    return evaluation.similarity_eval(model, dev, model.dim)["spearman_cosine"]


def train_stage(
    model: EncoderModel,
    split: DatasetSplit,
    loss_kind: str,
    spec: MatryoshkaSpec,
    stage: StageConfig,
    seed: int,
    dev_split: DatasetSplit | None = None,
) -> tuple[EncoderModel, dict]:
    """Run one fine-tuning stage in place; returns the model and its trace.

    The trace carries per-step losses, per-epoch means, and (when a dev
    split is given) the per-epoch dev metric. With select_best the
    parameters snap back to the best dev epoch instead of the last one.
    """
    if loss_kind == LOSS_MNRL:
        if split.kind != NLI_TRIPLETS:
            raise PipelineError(f"{LOSS_MNRL} needs an {NLI_TRIPLETS} split")
    elif loss_kind == LOSS_COSENT:
        if split.kind != STS_PAIRS:
            raise PipelineError(f"{LOSS_COSENT} needs an {STS_PAIRS} split")
    else:
        raise PipelineError(f"unknown loss kind {loss_kind!r}")
    if stage.select_best and dev_split is None:
        raise PipelineError("select_best requires a dev split")

    per_epoch = _n_batches(split, stage.batch_size)
    total_steps = stage.epochs * per_epoch
    if total_steps == 0:
        raise PipelineError("no training steps: split too small for batch size")
    schedule = Schedule.from_warmup_ratio(
        stage.peak_lr, total_steps, stage.warmup_ratio
    )
    state = init_adam(model.embedding_table.shape)
    use_negatives = split.kind == NLI_TRIPLETS and split.has_negatives

    step = 0
    step_losses: list = []
    epoch_means: list = []
    dev_metrics: list = []
    best: tuple | None = None
    for epoch in range(stage.epochs):
        epoch_losses = []
        for batch in shuffled_batches(split, stage.batch_size, seed, epoch):
            if loss_kind == LOSS_MNRL:
                groups = [[r.anchor for r in batch], [r.positive for r in batch]]
                if use_negatives:
                    groups.append([r.negative for r in batch])
                mats = [encode_batch(model, g) for g in groups]
                out = matryoshka_wrap(mnrl_loss, mats, spec, scale=stage.scale)
            else:
                groups = [[r.sentence1 for r in batch], [r.sentence2 for r in batch]]
                labels = np.array([r.unit_score for r in batch])
                mats = [encode_batch(model, g) for g in groups]
                out = matryoshka_wrap(
                    cosent_loss, mats, spec, labels=labels, scale=stage.scale
                )
            step += 1
            if not np.isfinite(out.value):
                raise PipelineError(f"non-finite loss at step {step}")
            table_grad = np.zeros_like(model.embedding_table)
            for texts, grad in zip(groups, out.grads):
                table_grad += encode_backward(model, texts, grad)
            lr = lr_at(schedule, step)
            if lr > 0.0:
                adam_step(state, model.embedding_table, table_grad, lr)
            step_losses.append(out.value)
            epoch_losses.append(out.value)
        epoch_means.append(float(np.mean(epoch_losses)))
        if dev_split is not None:
            metric = _dev_metric(model, dev_split)
            dev_metrics.append(metric)
            if best is None or metric > best[0]:
                best = (metric, model.embedding_table.copy())
            logger.info(
                "%s epoch %d/%d: mean loss %.6f, dev metric %.4f",
                loss_kind, epoch + 1, stage.epochs, epoch_means[-1], metric,
            )
        else:
            logger.info(
                "%s epoch %d/%d: mean loss %.6f",
                loss_kind, epoch + 1, stage.epochs, epoch_means[-1],
            )
    if stage.select_best and best is not None:
        model.embedding_table[...] = best[1]
    trace = {
        "loss_kind": loss_kind,
        "steps": total_steps,
        "step_losses": step_losses,
        "epoch_mean_loss": epoch_means,
        "dev_metric": dev_metrics,
    }
    return model, trace


@dataclass(frozen=True)
class RunArtifacts:
    """Paths and reports produced by one two-stage run."""

    output_dir: str
    config_path: str
    checkpoint_stage1: str
    checkpoint_stage2: str
    sweep_nli: evaluation.EvalReport
    sweep_sts: evaluation.EvalReport
    forgetting: evaluation.ForgettingReport
    stage1_trace: dict
    stage2_trace: dict
    stage1_dev: dict
    stage2_dev: dict
    manifest_path: str


def _write_report(
    report: evaluation.EvalReport, out_dir: Path, stem: str, model_name: str,
    max_seq_length: int,
) -> dict:
    jsonl = out_dir / f"{stem}.jsonl"
    table = out_dir / f"{stem}.txt"
    jsonl.write_text(
        evaluation.report_to_jsonl(report, model_name, max_seq_length),
        encoding="utf-8",
    )
    table.write_text(
        evaluation.report_to_table(report, model_name, max_seq_length),
        encoding="utf-8",
    )
    return {"jsonl": jsonl.name, "table": table.name}


def run_two_stage(cfg: RunConfig) -> RunArtifacts:
    """Execute the full sequential pipeline and write its artifact bundle.

    Datasets are parsed before any training so a bad stage-2 file fails
    the run immediately. The stage-1 checkpoint hits disk before stage 2
    starts; a failure afterwards still leaves a loadable model plus a
    manifest marking the run as failed.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        lock_fh = open(lock, "x")
    except FileExistsError:
        raise OutputDirLockedError(
            f"output directory {out_dir} is locked by another run ({lock})"
        ) from None
    try:
        with lock_fh:
            return _run_two_stage_locked(cfg, out_dir)
    finally:
        lock.unlink(missing_ok=True)


def _run_two_stage_locked(cfg: RunConfig, out_dir: Path) -> RunArtifacts:
    # eager validation: every dataset parses before stage 1 spends time
    nli_train = load_split(cfg.stage1.train_path, NLI_TRIPLETS, "nli_train")
    nli_dev = load_split(cfg.stage1.dev_path, NLI_TRIPLETS, "nli_dev")
    sts_train = load_split(cfg.stage2.train_path, STS_PAIRS, "sts_train")
    sts_dev = load_split(cfg.stage2.dev_path, STS_PAIRS, "sts_dev")
    if not nli_dev.has_negatives:
        raise ConfigError("NLI dev split needs negatives for triplet evaluation")

    config_path = out_dir / "config.cfg"
    config_path.write_text(serialize_config(cfg), encoding="utf-8")
    manifest_path = out_dir / "manifest.json"
    manifest: dict = {"status": "running", "config": config_path.name}

    def fail(stage_name: str, exc: Exception):
        manifest["status"] = "failed"
        manifest["failed_stage"] = stage_name
        manifest["error"] = str(exc)
        manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        raise PipelineError(
            f"{stage_name} failed: {exc}", manifest_path=str(manifest_path)
        ) from exc

    # stage 1: fresh init from the stage-1 training corpus vocabulary
    tokenizer = build_tokenizer(
        [t for r in nli_train.records for t in (r.anchor, r.positive, r.negative) if t],
        cfg.max_seq_length,
    )
    model = init_model(tokenizer, cfg.encoder_dim, cfg.seed)
    ckpt1 = out_dir / "stage1.ckpt"
    try:
        model, trace1 = train_stage(
            model, nli_train, LOSS_MNRL, cfg.matryoshka, cfg.stage1,
            cfg.seed, dev_split=nli_dev,
        )
        save_checkpoint(model, ckpt1)
        manifest["checkpoint_stage1"] = ckpt1.name
        stage1_dev = {
            "triplet_accuracy": evaluation.triplet_eval(model, nli_dev, model.dim),
            **evaluation.similarity_eval(model, sts_dev, model.dim),
        }
        manifest["stage1_dev"] = stage1_dev
        manifest["stage1_trace"] = trace1
    except Exception as exc:  # noqa: BLE001 - every failure must leave a manifest
        fail("stage1", exc)

    # stage 2: continue from the stage-1 parameters, fresh optimizer state
    ckpt2 = out_dir / "stage2.ckpt"
    try:
        model, trace2 = train_stage(
            model, sts_train, LOSS_COSENT, cfg.matryoshka, cfg.stage2,
            cfg.seed + 1, dev_split=sts_dev,
        )
        save_checkpoint(model, ckpt2)
        manifest["checkpoint_stage2"] = ckpt2.name
        stage2_dev = {
            "triplet_accuracy": evaluation.triplet_eval(model, nli_dev, model.dim),
            **evaluation.similarity_eval(model, sts_dev, model.dim),
        }
        manifest["stage2_dev"] = stage2_dev
        manifest["stage2_trace"] = trace2

        sweep_nli = evaluation.dimension_sweep(model, nli_dev, cfg.matryoshka.dims)
        sweep_sts = evaluation.dimension_sweep(model, sts_dev, cfg.matryoshka.dims)
        manifest["sweep_nli"] = _write_report(
            sweep_nli, out_dir, "sweep_nli", "stage2", cfg.max_seq_length
        )
        manifest["sweep_sts"] = _write_report(
            sweep_sts, out_dir, "sweep_sts", "stage2", cfg.max_seq_length
        )

        before = load_checkpoint(ckpt1)
        forgetting = evaluation.forgetting_report(before, model, nli_dev, model.dim)
        (out_dir / "forgetting.json").write_text(
            json.dumps(forgetting.to_dict(), indent=2), encoding="utf-8"
        )
        manifest["forgetting"] = forgetting.to_dict()
    except Exception as exc:  # noqa: BLE001
        fail("stage2", exc)

    manifest["status"] = "complete"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return RunArtifacts(
        output_dir=str(out_dir),
        config_path=str(config_path),
        checkpoint_stage1=str(ckpt1),
        checkpoint_stage2=str(ckpt2),
        sweep_nli=sweep_nli,
        sweep_sts=sweep_sts,
        forgetting=forgetting,
        stage1_trace=trace1,
        stage2_trace=trace2,
        stage1_dev=stage1_dev,
        stage2_dev=stage2_dev,
        manifest_path=str(manifest_path),
    )


@dataclass(frozen=True)
class BenchResult:
    """Throughput of repeated full encode passes; informational only."""

    sentences_per_second: float
    batch_size: int
    n_sentences: int
    wall_seconds: float

    def to_dict(self) -> dict:
        return {
            "sentences_per_second": self.sentences_per_second,
            "batch_size": self.batch_size,
            "n_sentences": self.n_sentences,
            "wall_seconds": self.wall_seconds,
        }


def bench_throughput(
    model: EncoderModel,
    texts: Sequence[str],
    batch_size: int = 32,
    repetitions: int = 3,
) -> BenchResult:
    """Median-of-repetitions encode throughput over the given sentences.

    One untimed warmup pass precedes the timed passes. The reported rate
    is n_sentences / median wall time of a full pass.
    """
    if not texts:
        raise ValueError("bench needs at least one text")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    batches = [
        list(texts[i : i + batch_size]) for i in range(0, len(texts), batch_size)
    ]
    for batch in batches:  # warmup
        encode_batch(model, batch)
    walls = []
    for _ in range(repetitions):
        start = time.perf_counter()
        for batch in batches:
            encode_batch(model, batch)
        walls.append(time.perf_counter() - start)
    wall = statistics.median(walls)
    return BenchResult(
        sentences_per_second=len(texts) / wall,
        batch_size=batch_size,
        n_sentences=len(texts),
        wall_seconds=wall,
    )
