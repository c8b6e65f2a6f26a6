"""Contrastive sentence-embedding training with sampled dropout rates.

Core pieces: a float64 tape autodiff (`tensor`), dropout whose rate is
drawn from a distribution per forward or per sentence (`dropout`), a toy
transformer encoder with a dual-forward positive-pair builder (`encoder`),
the temperature-scaled contrastive loss (`loss`), a Spearman evaluation
harness (`evaluation`), and a trainer with ablation tooling (`training`,
`ablation`). The CLI lives in `cli`, the HTTP service in `service`.
"""

__version__ = "0.1.0"

from .config import TrainConfig, config_from_mapping, parse_config_file
from .dropout import DropoutDistribution, DropoutSpec, MaskRecord, apply_dropout, sample_mask, sample_rate
from .encoder import Batch, EncoderConfig, EncoderWeights, dual_forward, encode, pool
from .errors import (
    CheckpointError,
    ContractError,
    DataError,
    DimensionError,
    DivergenceError,
    SampledropError,
    StateError,
)
from .evaluation import EvalReport, evaluate, rank_average_ties, spearman
from .loss import LossConfig, cosine_sim, info_nce_loss, info_nce_oracle
from .rng import RngStream
from .tensor import Tape, Tensor, grad_check
from .training import RunRecord, model_grad_check, train

__all__ = [
    "__version__",
    "Batch",
    "CheckpointError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DivergenceError",
    "DropoutDistribution",
    "DropoutSpec",
    "EncoderConfig",
    "EncoderWeights",
    "EvalReport",
    "LossConfig",
    "MaskRecord",
    "RngStream",
    "RunRecord",
    "SampledropError",
    "StateError",
    "Tape",
    "Tensor",
    "TrainConfig",
    "apply_dropout",
    "config_from_mapping",
    "cosine_sim",
    "dual_forward",
    "encode",
    "evaluate",
    "grad_check",
    "info_nce_loss",
    "info_nce_oracle",
    "model_grad_check",
    "parse_config_file",
    "pool",
    "rank_average_ties",
    "sample_mask",
    "sample_rate",
    "spearman",
    "train",
]
