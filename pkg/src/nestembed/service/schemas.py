"""Request/response models for the HTTP service."""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class TrainRequest(BaseModel):
    config_text: str = Field(..., description="Run config in the flat key=value format")
    output_dir: Optional[str] = Field(
        None, description="Override the config's output_dir"
    )


class ForgettingOut(BaseModel):
    metric_before: float
    metric_after: float
    delta: float


class TrainResponse(BaseModel):
    output_dir: str
    checkpoint_stage1: str
    checkpoint_stage2: str
    manifest_path: str
    stage1_dev: Dict[str, float]
    stage2_dev: Dict[str, float]
    forgetting: ForgettingOut


class EvalStsRequest(BaseModel):
    model_path: str
    data_path: str
    dim: Optional[int] = Field(None, ge=1)


class EvalStsResponse(BaseModel):
    pearson_cosine: float
    spearman_cosine: float
    embedding_dimension: int
    n_records: int


class EvalNliRequest(BaseModel):
    model_path: str
    data_path: str
    dim: Optional[int] = Field(None, ge=1)


class EvalNliResponse(BaseModel):
    cosine_accuracy: float
    embedding_dimension: int
    n_records: int


class SweepRequest(BaseModel):
    model_path: str
    data_path: str
    task: Literal["sts", "nli"]
    dims: Optional[List[int]] = None


class SweepResponse(BaseModel):
    task: str
    n_records: int
    per_dim: Dict[int, Dict[str, float]]
    table: str
    jsonl: str


class BenchRequest(BaseModel):
    model_path: str
    texts: Optional[List[str]] = None
    texts_path: Optional[str] = Field(
        None, description="Plain-text file, one sentence per line"
    )
    batch_size: int = Field(32, ge=1)
    repetitions: int = Field(3, ge=1)


class BenchResponse(BaseModel):
    sentences_per_second: float
    batch_size: int
    n_sentences: int
    wall_seconds: float


class GradcheckRequest(BaseModel):
    instances: int = Field(20, ge=1)
    seed: int = 0
    eps: float = Field(1e-5, gt=0)
    tolerance: float = Field(1e-4, gt=0)


class GradcheckResponse(BaseModel):
    max_errors: Dict[str, float]
    tolerance: float
    passed: bool


class EncodeRequest(BaseModel):
    model_path: str
    texts: List[str] = Field(..., min_length=1)
    dim: Optional[int] = Field(None, ge=1)


class EncodeResponse(BaseModel):
    embeddings: List[List[float]]
    dim: int
