"""Cosine similarity and the temperature-scaled contrastive batch loss.

The default denominator ranges over the second-view embeddings h_j+ (the
standard in-batch-negatives form); ``denominator_mode="literal_hj"`` sums
over the first-view embeddings h_j instead, which includes the degenerate
self-similarity term. Both are exposed so the two readings can be compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor

DENOMINATOR_MODES = ("positives_of_all", "literal_hj")


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.05
    denominator_mode: str = "positives_of_all"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ContractError(f"temperature must be > 0, got {self.temperature}")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ContractError(
                f"denominator_mode must be one of {DENOMINATOR_MODES}, "
                f"got {self.denominator_mode!r}"
            )


def cosine_sim(a, b) -> float:
    """Cosine of two vectors, clamped to [-1, 1] against rounding."""
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.shape != bv.shape:
        raise DimensionError(f"cosine_sim shapes differ: {av.shape} vs {bv.shape}")
    na = math.sqrt(float(av @ av))
    nb = math.sqrt(float(bv @ bv))
    if na == 0.0 or nb == 0.0:
        raise ContractError("cosine_sim: zero-norm input")
    return max(-1.0, min(1.0, float(av @ bv) / (na * nb)))


def info_nce_loss(h: Tensor, h_plus: Tensor, cfg: LossConfig) -> Tensor:
    """Mean over rows of -log softmax of the positive pair's similarity.

    Differentiable; stabilized with log-sum-exp. Rows of both inputs must
    have nonzero norm.
    """
    if h.ndim != 2 or h_plus.ndim != 2 or h.shape != h_plus.shape:
        raise DimensionError(
            f"info_nce_loss needs matching [N, d] inputs, got {h.shape} and {h_plus.shape}"
        )
    n = h.shape[0]
    hn = T.l2_normalize_rows(h)
    hpn = T.l2_normalize_rows(h_plus)
    sim_pos = T.scale(T.matmul(hn, T.transpose(hpn, (1, 0))), 1.0 / cfg.temperature)
    if cfg.denominator_mode == "positives_of_all":
        denom = sim_pos
    else:
        denom = T.scale(T.matmul(hn, T.transpose(hn, (1, 0))), 1.0 / cfg.temperature)
    per_row = T.sub(T.logsumexp_rows(denom), T.take_diag(sim_pos))
    return T.scale(T.tensor_sum(per_row), 1.0 / n)


def info_nce_oracle(h, h_plus, cfg: LossConfig) -> float:
    """Same value as info_nce_loss via naive scalar loops, no LSE trick."""
    hv = np.asarray(h.data if isinstance(h, Tensor) else h, dtype=np.float64)
    hp = np.asarray(h_plus.data if isinstance(h_plus, Tensor) else h_plus, dtype=np.float64)
    n = hv.shape[0]
    total = 0.0
    for i in range(n):
        pos = cosine_sim(hv[i], hp[i]) / cfg.temperature
        denom = 0.0
        for j in range(n):
            other = hp[j] if cfg.denominator_mode == "positives_of_all" else hv[j]
            denom += math.exp(cosine_sim(hv[i], other) / cfg.temperature)
        total += -math.log(math.exp(pos) / denom)
    return total / n
