from pathlib import Path

import pytest

from nestembed.data import write_split
from nestembed.synthetic import make_nli_split, make_sts_split


@pytest.fixture
def corpus_dir(tmp_path):
    """Small synthetic dataset files for fast pipeline/service tests."""
    d = tmp_path / "data"
    d.mkdir()
    write_split(make_nli_split(60, 11, "train"), d / "nli_train.jsonl")
    write_split(make_nli_split(40, 12, "dev"), d / "nli_dev.jsonl")
    write_split(make_sts_split(40, 13, "train"), d / "sts_train.jsonl")
    write_split(make_sts_split(30, 14, "dev"), d / "sts_dev.jsonl")
    return d


def config_text(data_dir: Path, out_dir: Path, **overrides) -> str:
    values = {
        "seed": 42,
        "output_dir": str(out_dir),
        "encoder.dim": 16,
        "encoder.max_seq_length": 64,
        "matryoshka.dims": "4,8,16",
        "stage1.nli_train_path": str(data_dir / "nli_train.jsonl"),
        "stage1.nli_dev_path": str(data_dir / "nli_dev.jsonl"),
        "stage1.epochs": 2,
        "stage2.sts_train_path": str(data_dir / "sts_train.jsonl"),
        "stage2.sts_dev_path": str(data_dir / "sts_dev.jsonl"),
        "stage2.epochs": 2,
    }
    values.update(overrides)
    return "\n".join(f"{k} = {v}" for k, v in values.items()) + "\n"
