"""Train, evaluate, and serve tiny nested-dimension sentence embedding models.

Core layout: numerics (vector/statistics kernels), data (dataset records
and parsing), encoder (mean-pooling embedding bag with manual backward),
losses (ranking losses with analytic gradients), evaluation (correlation
and triplet evaluators), pipeline (two-stage training orchestration),
service (FastAPI wrapper), cli (thin client of the service).
"""

__version__ = "0.1.0"

from .data import DatasetSplit, ScoredPair, Triplet
from .encoder import EncoderModel, load_checkpoint, save_checkpoint
from .evaluation import EvalReport, ForgettingReport
from .losses import LossOutput, MatryoshkaSpec, cosent_loss, matryoshka_wrap, mnrl_loss
from .pipeline import BenchResult, RunConfig, StageConfig, run_two_stage

__all__ = [
    "__version__",
    "DatasetSplit",
    "ScoredPair",
    "Triplet",
    "EncoderModel",
    "load_checkpoint",
    "save_checkpoint",
    "EvalReport",
    "ForgettingReport",
    "LossOutput",
    "MatryoshkaSpec",
    "cosent_loss",
    "matryoshka_wrap",
    "mnrl_loss",
    "BenchResult",
    "RunConfig",
    "StageConfig",
    "run_two_stage",
]
