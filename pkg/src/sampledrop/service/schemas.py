"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class TrainRequest(BaseModel):
    config: dict[str, Any] = Field(
        description="Same keys as the config file, e.g. {'corpus': ..., 'steps': 50}"
    )


class EvalStepSummary(BaseModel):
    step: int
    aggregate: float


class TrainResponse(BaseModel):
    output_dir: str
    checkpoint: str
    log: str
    steps: int
    final_loss: float
    wall_clock_s: float
    config_fingerprint: str
    evals: list[EvalStepSummary] = []


class DatasetScoreModel(BaseModel):
    dataset: str
    spearman: float
    n_pairs: int


class EvaluateRequest(BaseModel):
    checkpoint: str
    datasets: dict[str, str] = Field(description="dataset name -> TSV path")
    batch_size: int = 32


class EvaluateResponse(BaseModel):
    datasets: list[DatasetScoreModel]
    aggregate: float
    seed: int | None = None
    config_fingerprint: str = ""
    skipped: list[str] = []


class EmbedRequest(BaseModel):
    checkpoint: str
    sentences: list[str]
    batch_size: int = 32


class EmbedResponse(BaseModel):
    embeddings: list[list[float]]
    dim: int


class AblateRequest(BaseModel):
    config: dict[str, Any]
    methods: list[str]
    seeds: list[int]
    output_dir: str | None = None


class AblationCellModel(BaseModel):
    method: str
    seed: int
    aggregate: float | None
    run_dir: str
    error: str | None = None


class AblationRowModel(BaseModel):
    method: str
    avg: float | None
    std: float | None
    max: float | None
    n_seeds: int
    n_completed: int


class AblateResponse(BaseModel):
    rows: list[AblationRowModel]
    cells: list[AblationCellModel]
    selection: str
    top_k: int


class GradcheckRequest(BaseModel):
    config: dict[str, Any] = {}
    frozen_masks: bool = False
    tolerance: float = 1e-4
    step: float = 1e-5
    seed: int = 0
    vocab_size: int = 16


class GradcheckEntryModel(BaseModel):
    name: str
    max_rel_err: float
    passed: bool


class GradcheckResponse(BaseModel):
    passed: bool
    tolerance: float
    entries: list[GradcheckEntryModel]
    worst: GradcheckEntryModel


class SynthRequest(BaseModel):
    out: str
    corpus: str | None = None
    corpus_out: str | None = None
    n_pairs: int = 100
    n_sentences: int = 200
    n_words: int = 40
    min_count: int = 1
    seed: int = 0


class SynthResponse(BaseModel):
    sts_path: str
    corpus_path: str
    n_pairs: int
    n_sentences: int
