"""Command-line client for the embedding service.

Every subcommand maps to one HTTP request. By default the requests run
against an in-process instance of the app (no socket is opened); pass
--server URL to target a running `nestembed serve` instead.

Exit codes: 0 success, 1 structured error, 2 usage error. Set
NESTEMBED_VERBOSE=1 for per-epoch training progress on the server side.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path

import httpx


class ServiceError(RuntimeError):
    pass


def _call(server: str | None, path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            resp = client.post(path, json=payload)
    else:
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())

        async def go():
            async with httpx.AsyncClient(
                transport=transport, base_url="http://nestembed.local", timeout=None
            ) as client:
                return await client.post(path, json=payload)

        resp = asyncio.run(go())
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise ServiceError(f"{path} -> HTTP {resp.status_code}: {detail}")
    return resp.json()


def _cmd_train(args) -> int:
    payload = {"config_text": Path(args.config).read_text(encoding="utf-8")}
    if args.output_dir:
        payload["output_dir"] = args.output_dir
    out = _call(args.server, "/train", payload)
    print(f"output_dir: {out['output_dir']}")
    print(f"checkpoint_stage1: {out['checkpoint_stage1']}")
    print(f"checkpoint_stage2: {out['checkpoint_stage2']}")
    s1, s2 = out["stage1_dev"], out["stage2_dev"]
    print(
        "stage1 dev: "
        f"triplet_accuracy={s1['triplet_accuracy']:.4f} "
        f"spearman_cosine={s1['spearman_cosine']:.4f}"
    )
    print(
        "stage2 dev: "
        f"triplet_accuracy={s2['triplet_accuracy']:.4f} "
        f"spearman_cosine={s2['spearman_cosine']:.4f}"
    )
    f = out["forgetting"]
    print(
        f"forgetting: before={f['metric_before']:.4f} "
        f"after={f['metric_after']:.4f} delta={f['delta']:+.4f}"
    )
    print(f"manifest: {out['manifest_path']}")
    return 0


def _cmd_eval_sts(args) -> int:
    out = _call(
        args.server,
        "/eval/sts",
        {"model_path": args.model, "data_path": args.data, "dim": args.dim},
    )
    print(
        f"pearson_cosine={out['pearson_cosine']:.6f} "
        f"spearman_cosine={out['spearman_cosine']:.6f} "
        f"dim={out['embedding_dimension']} n={out['n_records']}"
    )
    return 0


def _cmd_eval_nli(args) -> int:
    out = _call(
        args.server,
        "/eval/nli",
        {"model_path": args.model, "data_path": args.data, "dim": args.dim},
    )
    print(
        f"cosine_accuracy={out['cosine_accuracy']:.6f} "
        f"dim={out['embedding_dimension']} n={out['n_records']}"
    )
    return 0


def _cmd_sweep(args) -> int:
    dims = [int(d) for d in args.dims.split(",")] if args.dims else None
    out = _call(
        args.server,
        "/sweep",
        {
            "model_path": args.model,
            "data_path": args.data,
            "task": args.task,
            "dims": dims,
        },
    )
    if args.jsonl:
        sys.stdout.write(out["jsonl"])
    else:
        sys.stdout.write(out["table"])
    return 0


def _cmd_bench(args) -> int:
    out = _call(
        args.server,
        "/bench",
        {
            "model_path": args.model,
            "texts_path": args.texts,
            "batch_size": args.batch_size,
            "repetitions": args.repetitions,
        },
    )
    print(
        f"sentences_per_second={out['sentences_per_second']:.1f} "
        f"n_sentences={out['n_sentences']} "
        f"wall_seconds={out['wall_seconds']:.4f} "
        f"batch_size={out['batch_size']}"
    )
    return 0


def _cmd_gradcheck(args) -> int:
    out = _call(
        args.server,
        "/gradcheck",
        {"instances": args.instances, "seed": args.seed, "eps": args.eps,
         "tolerance": args.tolerance},
    )
    for suite, err in sorted(out["max_errors"].items()):
        print(f"{suite}: max_rel_err={err:.3e}")
    print("PASS" if out["passed"] else "FAIL", f"(tolerance {out['tolerance']:g})")
    return 0 if out["passed"] else 1


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nestembed",
        description="Train and evaluate nested-dimension sentence embedding models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_server(p):
        p.add_argument(
            "--server",
            default=None,
            metavar="URL",
            help="HTTP service to use (default: run in-process)",
        )

    p = sub.add_parser("train", help="run the two-stage training pipeline")
    p.add_argument("--config", required=True, help="run config file")
    p.add_argument("--output-dir", default=None, help="override config output_dir")
    add_server(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval-sts", help="pearson/spearman of a checkpoint on STS data")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="STS JSONL path")
    p.add_argument("--dim", type=int, default=None, help="truncation dim (default full)")
    add_server(p)
    p.set_defaults(func=_cmd_eval_sts)

    p = sub.add_parser("eval-nli", help="triplet accuracy of a checkpoint on NLI data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="NLI JSONL path")
    p.add_argument("--dim", type=int, default=None)
    add_server(p)
    p.set_defaults(func=_cmd_eval_nli)

    p = sub.add_parser("sweep", help="evaluate across truncation dimensions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", required=True, choices=["sts", "nli"])
    p.add_argument("--dims", default=None, help="comma-separated dims (default: full)")
    p.add_argument("--jsonl", action="store_true", help="print JSONL instead of a table")
    add_server(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bench", help="encode-throughput benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--texts", required=True, help="plain-text file, one sentence per line")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--repetitions", type=int, default=3)
    add_server(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    add_server(p)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO
        if os.environ.get("NESTEMBED_VERBOSE", "").lower() in ("1", "true", "yes")
        else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
