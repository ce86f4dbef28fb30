"""FastAPI service wrapping the training, evaluation, and benchmark core.

Endpoints mirror the CLI subcommands one-to-one; the CLI is a thin client
of this app. Domain errors map to 4xx responses, stage failures to 500
with the partial-artifact manifest path in the detail.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..data import NLI_TRIPLETS, STS_PAIRS, load_split
from ..encoder import encode_batch, load_checkpoint
from ..evaluation import (
    dimension_sweep,
    report_to_jsonl,
    report_to_table,
    similarity_eval,
    triplet_eval,
)
from ..losses import gradcheck_suite
from ..pipeline import (
    OutputDirLockedError,
    PipelineError,
    bench_throughput,
    parse_config,
    run_two_stage,
)
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="nestembed",
        version=__version__,
        description="Nested-dimension sentence embedding trainer and evaluator",
    )

    @app.exception_handler(ValueError)
    async def _domain_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _not_found(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(OutputDirLockedError)
    async def _locked(request: Request, exc: OutputDirLockedError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(PipelineError)
    async def _stage_failed(request: Request, exc: PipelineError):
        detail = str(exc)
        if exc.manifest_path:
            detail += f" (partial-artifact manifest: {exc.manifest_path})"
        return JSONResponse(status_code=500, content={"detail": detail})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        cfg = parse_config(req.config_text)
        if req.output_dir is not None:
            from dataclasses import replace

            cfg = replace(cfg, output_dir=req.output_dir)
        art = run_two_stage(cfg)
        return schemas.TrainResponse(
            output_dir=art.output_dir,
            checkpoint_stage1=art.checkpoint_stage1,
            checkpoint_stage2=art.checkpoint_stage2,
            manifest_path=art.manifest_path,
            stage1_dev=art.stage1_dev,
            stage2_dev=art.stage2_dev,
            forgetting=schemas.ForgettingOut(**art.forgetting.to_dict()),
        )

    @app.post("/eval/sts", response_model=schemas.EvalStsResponse)
    def eval_sts(req: schemas.EvalStsRequest):
        model = load_checkpoint(req.model_path)
        split = load_split(req.data_path, STS_PAIRS)
        dim = req.dim if req.dim is not None else model.dim
        metrics = similarity_eval(model, split, dim)
        return schemas.EvalStsResponse(
            pearson_cosine=metrics["pearson_cosine"],
            spearman_cosine=metrics["spearman_cosine"],
            embedding_dimension=dim,
            n_records=len(split),
        )

    @app.post("/eval/nli", response_model=schemas.EvalNliResponse)
    def eval_nli(req: schemas.EvalNliRequest):
        model = load_checkpoint(req.model_path)
        split = load_split(req.data_path, NLI_TRIPLETS)
        dim = req.dim if req.dim is not None else model.dim
        return schemas.EvalNliResponse(
            cosine_accuracy=triplet_eval(model, split, dim),
            embedding_dimension=dim,
            n_records=len(split),
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        model = load_checkpoint(req.model_path)
        kind = STS_PAIRS if req.task == "sts" else NLI_TRIPLETS
        split = load_split(req.data_path, kind)
        dims = req.dims if req.dims else [model.dim]
        report = dimension_sweep(model, split, dims)
        name = Path(req.model_path).stem
        max_seq = model.tokenizer.max_seq_length
        return schemas.SweepResponse(
            task=report.task,
            n_records=report.n_records,
            per_dim=report.per_dim,
            table=report_to_table(report, name, max_seq),
            jsonl=report_to_jsonl(report, name, max_seq),
        )

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest):
        model = load_checkpoint(req.model_path)
        if (req.texts is None) == (req.texts_path is None):
            raise ValueError("provide exactly one of texts or texts_path")
        if req.texts_path is not None:
            raw = Path(req.texts_path).read_text(encoding="utf-8")
            texts = [line for line in raw.split("\n") if line.strip()]
        else:
            texts = req.texts
        result = bench_throughput(model, texts, req.batch_size, req.repetitions)
        return schemas.BenchResponse(**result.to_dict())

    @app.post("/gradcheck", response_model=schemas.GradcheckResponse)
    def gradcheck(req: schemas.GradcheckRequest):
        worst = gradcheck_suite(instances=req.instances, seed=req.seed, eps=req.eps)
        return schemas.GradcheckResponse(
            max_errors=worst,
            tolerance=req.tolerance,
            passed=all(v < req.tolerance for v in worst.values()),
        )

    @app.post("/encode", response_model=schemas.EncodeResponse)
    def encode(req: schemas.EncodeRequest):
        model = load_checkpoint(req.model_path)
        dim = req.dim if req.dim is not None else model.dim
        if not 1 <= dim <= model.dim:
            raise ValueError(f"dim {dim} outside [1, {model.dim}]")
        emb = encode_batch(model, req.texts)[:, :dim]
        return schemas.EncodeResponse(embeddings=emb.tolist(), dim=dim)

    return app
