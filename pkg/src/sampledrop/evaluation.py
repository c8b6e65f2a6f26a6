"""Sentence-pair evaluation: cosine predictions vs gold, Spearman ranked.

Spearman is computed as the Pearson correlation of average-tie ranks (the
fractional-rank convention), not the 6*sum(d^2) shortcut, so tied data is
handled correctly. Sums use math.fsum, which makes the result independent
of example order, bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import StsExample, Vocabulary, batch_from_ids, tokenize
from .encoder import EncoderConfig, EncoderWeights, encode
from .errors import ContractError, DataError
from .loss import cosine_sim
from .rng import RngStream


def rank_average_ties(values) -> np.ndarray:
    """Ranks 1..n; runs of equal values share the average of their ranks."""
    vals = np.asarray(values, dtype=np.float64)
    n = vals.size
    if n < 2:
        raise ContractError(f"ranking needs at least 2 values, got {n}")
    order = np.argsort(vals, kind="stable")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and vals[order[j + 1]] == vals[order[i]]:
            j += 1
        avg_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of the two lists' average-tie ranks."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise ContractError(f"spearman needs equal-length vectors, got {xv.shape} and {yv.shape}")
    n = xv.size
    if n < 2:
        raise ContractError(f"spearman needs at least 2 values, got {n}")
    if np.all(xv == xv[0]) or np.all(yv == yv[0]):
        raise ContractError("spearman undefined for a constant input list")
    rx = rank_average_ties(xv)
    ry = rank_average_ties(yv)
    mx = math.fsum(rx) / n
    my = math.fsum(ry) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = math.fsum((a - mx) ** 2 for a in rx)
    vy = math.fsum((b - my) ** 2 for b in ry)
    r = cov / math.sqrt(vx * vy)
    return max(-1.0, min(1.0, r))


@dataclass
class DatasetScore:
    dataset: str
    spearman: float
    n_pairs: int


@dataclass
class EvalReport:
    datasets: list[DatasetScore]
    aggregate: float
    seed: int | None = None
    config_fingerprint: str = ""
    skipped: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "datasets": [
                {"dataset": s.dataset, "spearman": s.spearman, "n_pairs": s.n_pairs}
                for s in self.datasets
            ],
            "aggregate": self.aggregate,
            "seed": self.seed,
            "config_fingerprint": self.config_fingerprint,
            "skipped": list(self.skipped),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset", "spearman", "n_pairs"])
            for s in self.datasets:
                writer.writerow([s.dataset, repr(s.spearman), s.n_pairs])
            writer.writerow(["__aggregate__", repr(self.aggregate), sum(s.n_pairs for s in self.datasets)])


def fingerprint_config(mapping: Mapping) -> str:
    canonical = json.dumps(mapping, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def embed_sentences(
    sentences: list[str],
    weights: EncoderWeights,
    config: EncoderConfig,
    vocab: Vocabulary,
    batch_size: int = 32,
) -> np.ndarray:
    """Eval-mode embeddings, [n, d_model]; dropout fully disabled."""
    stream = RngStream(0)  # never drawn from in eval mode
    rows = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start : start + batch_size]
        batch = batch_from_ids([tokenize(s, vocab, config.max_seq_len) for s in chunk])
        emb, _ = encode(batch, weights, config, stream, training=False)
        rows.append(emb.data)
    return np.concatenate(rows, axis=0) if rows else np.empty((0, config.d_model))


def evaluate(
    weights: EncoderWeights,
    config: EncoderConfig,
    datasets: Mapping[str, list[StsExample]],
    vocab: Vocabulary,
    batch_size: int = 32,
    seed: int | None = None,
    config_fingerprint: str = "",
) -> EvalReport:
    """Score each dataset: spearman(cosine(embed(a), embed(b)), gold)."""
    scores: list[DatasetScore] = []
    skipped: list[str] = []
    for name in sorted(datasets):
        examples = datasets[name]
        if len(examples) < 2:
            skipped.append(f"{name}: fewer than 2 pairs, skipped")
            continue
        emb_a = embed_sentences([ex.sentence_a for ex in examples], weights, config, vocab, batch_size)
        emb_b = embed_sentences([ex.sentence_b for ex in examples], weights, config, vocab, batch_size)
        preds = [cosine_sim(emb_a[i], emb_b[i]) for i in range(len(examples))]
        golds = [ex.gold_score for ex in examples]
        scores.append(DatasetScore(dataset=name, spearman=spearman(preds, golds), n_pairs=len(examples)))
    if not scores:
        raise DataError("no dataset had at least 2 pairs to evaluate")
    aggregate = math.fsum(s.spearman for s in scores) / len(scores)
    return EvalReport(
        datasets=scores,
        aggregate=aggregate,
        seed=seed,
        config_fingerprint=config_fingerprint,
        skipped=skipped,
    )
