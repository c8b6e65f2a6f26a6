"""Method-by-seed ablation sweeps with top-3 aggregation.

Each (method, seed) cell trains from scratch and reports its aggregate
Spearman over the configured datasets. Per method the summary keeps the
mean and sample standard deviation of the top-k cells by aggregate
(k = min(3, n_seeds)) and the maximum over all seeds. A failed cell is
recorded with its error and the table is still emitted for the rest.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import METHODS, TrainConfig
from .data import parse_sts_tsv
from .errors import ContractError, SampledropError
from .evaluation import evaluate
from .training import train

TOP_K = 3


@dataclass
class AblationCell:
    method: str
    seed: int
    aggregate: float | None
    run_dir: str
    error: str | None = None


@dataclass
class AblationRow:
    method: str
    avg: float | None
    std: float | None
    max: float | None
    n_seeds: int
    n_completed: int


@dataclass
class AblationResult:
    rows: list[AblationRow]
    cells: list[AblationCell]
    top_k: int = TOP_K
    selection: str = "top-k cells by aggregate Spearman"

    def to_json_dict(self) -> dict:
        return {
            "selection": self.selection,
            "top_k": self.top_k,
            "rows": [vars(r) for r in self.rows],
            "cells": [vars(c) for c in self.cells],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "avg", "std", "max", "n_seeds", "n_completed"])
            for r in self.rows:
                writer.writerow([
                    r.method,
                    "" if r.avg is None else repr(r.avg),
                    "" if r.std is None else repr(r.std),
                    "" if r.max is None else repr(r.max),
                    r.n_seeds,
                    r.n_completed,
                ])


def _summarize(method: str, cells: list[AblationCell]) -> AblationRow:
    aggregates = sorted((c.aggregate for c in cells if c.aggregate is not None), reverse=True)
    if not aggregates:
        return AblationRow(method, None, None, None, len(cells), 0)
    top = aggregates[: min(TOP_K, len(aggregates))]
    avg = math.fsum(top) / len(top)
    if len(top) > 1:
        var = math.fsum((a - avg) ** 2 for a in top) / (len(top) - 1)
        std = math.sqrt(var)
    else:
        std = 0.0
    return AblationRow(method, avg, std, max(aggregates), len(cells), len(aggregates))


def ablate(base: TrainConfig, methods: list[str], seeds: list[int],
           out_dir: str | None = None) -> AblationResult:
    """Train and evaluate every (method, seed) cell; summarize per method."""
    if not methods or not seeds:
        raise ContractError("ablate needs at least one method and one seed")
    for m in methods:
        if m not in METHODS:
            raise ContractError(f"unknown method {m!r}, expected one of {METHODS}")
    if not base.sts_datasets:
        raise ContractError("ablate needs at least one sts.<name> dataset in the config")
    root = Path(out_dir) if out_dir else Path(base.output_dir or ".") / "ablation"
    root.mkdir(parents=True, exist_ok=True)
    datasets = {name: parse_sts_tsv(path) for name, path in base.sts_datasets.items()}

    cells: list[AblationCell] = []
    for method in methods:
        for seed in seeds:
            run_dir = root / method / f"seed{seed}"
            cfg = base.with_overrides(method=method, seed=seed, output_dir=str(run_dir))
            try:
                record = train(cfg)
                ckpt = load_checkpoint(record.checkpoint_path)
                report = evaluate(ckpt.weights, ckpt.config, datasets, ckpt.vocab,
                                  seed=seed, config_fingerprint=record.config_fingerprint)
                report.write_json(run_dir / "eval.json")
                report.write_csv(run_dir / "eval.csv")
                cells.append(AblationCell(method, seed, report.aggregate, str(run_dir)))
            except SampledropError as exc:
                cells.append(AblationCell(method, seed, None, str(run_dir),
                                          error=f"{exc.category}: {exc}"))

    rows = [_summarize(m, [c for c in cells if c.method == m]) for m in methods]
    result = AblationResult(rows=rows, cells=cells)
    result.write_csv(root / "ablation.csv")
    result.write_json(root / "ablation.json")
    return result
