"""Training loop, optimizers, and the whole-model gradient check.

One step: draw a batch, encode it twice with independent dropout streams,
take the contrastive loss over the resulting pairs, backpropagate, update.
All randomness hangs off the run seed through named stream paths
(init / shuffle / train.step.forward...), so a (config, seed) pair
reproduces the loss trajectory bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import TrainConfig
from .data import build_vocab, load_corpus, make_batches, parse_sts_tsv
from .encoder import Batch, EncoderConfig, EncoderWeights, dual_forward, encode
from .errors import ContractError, DivergenceError
from .evaluation import EvalReport, evaluate, fingerprint_config
from .loss import LossConfig, info_nce_loss
from .rng import RngStream
from .tensor import GradCheckReport, Tape, Tensor, grad_check


class Sgd:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for p in self.params.values():
            if p.grad is not None:
                p.data -= self.lr * p.grad


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for key, p in self.params.items():
            if p.grad is None:
                continue
            self.m[key] = b1 * self.m[key] + (1.0 - b1) * p.grad
            self.v[key] = b2 * self.v[key] + (1.0 - b2) * (p.grad * p.grad)
            m_hat = self.m[key] / bc1
            v_hat = self.v[key] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: TrainConfig, weights: EncoderWeights):
    params = dict(weights.items())
    if config.optimizer == "sgd":
        return Sgd(params, lr=config.learning_rate)
    return Adam(
        params,
        lr=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )


@dataclass
class RunRecord:
    output_dir: str
    checkpoint_path: str
    log_path: str
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    mean_rates: list[float] = field(default_factory=list)
    eval_reports: list[tuple[int, EvalReport]] = field(default_factory=list)
    wall_clock_s: float = 0.0
    config_fingerprint: str = ""

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def to_json_dict(self) -> dict:
        return {
            "output_dir": self.output_dir,
            "checkpoint": self.checkpoint_path,
            "log": self.log_path,
            "steps": self.steps,
            "losses": self.losses,
            "mean_rates": self.mean_rates,
            "evals": [
                {"step": step, "report": report.to_json_dict()}
                for step, report in self.eval_reports
            ],
            "wall_clock_s": self.wall_clock_s,
            "config_fingerprint": self.config_fingerprint,
        }


def _write_log(path, steps, losses, rates) -> None:
    lines = ["step,loss,mean_rate"]
    for s, l, r in zip(steps, losses, rates):
        lines.append(f"{s},{l!r},{r!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def train(config: TrainConfig) -> RunRecord:
    """Run the configured training; returns the record, writes artifacts.

    Written to output_dir: vocab.txt, train_log.csv (step,loss,mean_rate),
    checkpoint.bin (final), checkpoint_step<k>.bin at eval points,
    eval_step<k>.json/.csv when sts datasets are configured, run_record.json
    and config_resolved.json.
    """
    config.validate(for_train=True)
    t0 = time.perf_counter()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sentences = load_corpus(config.corpus)
    vocab = build_vocab(sentences, config.min_count, config.max_vocab)
    vocab.save(out_dir / "vocab.txt")
    enc_cfg = config.encoder_config(len(vocab))
    loss_cfg = config.loss_config()
    fingerprint = fingerprint_config(config.to_dict())

    root = RngStream(config.seed)
    weights = EncoderWeights.init(enc_cfg, root.fork("init"))
    optimizer = make_optimizer(config, weights)

    sts = {name: parse_sts_tsv(path) for name, path in config.sts_datasets.items()}
    meta = {"seed": config.seed, "config_fingerprint": fingerprint, "train_config": config.to_dict()}

    def batch_stream():
        epoch = 0
        while True:
            for b in make_batches(sentences, vocab, config.batch_size,
                                  config.max_seq_len, root.fork("shuffle").fork(epoch)):
                yield b
            epoch += 1

    batches = batch_stream()
    record = RunRecord(
        output_dir=str(out_dir),
        checkpoint_path=str(out_dir / "checkpoint.bin"),
        log_path=str(out_dir / "train_log.csv"),
        config_fingerprint=fingerprint,
    )
    last_finite: float | None = None
    for step in range(1, config.steps + 1):
        batch = next(batches)
        step_stream = root.fork("train").fork(step)
        weights.zero_grads()
        with Tape() as tape:
            h, h_plus, (rec0, rec1) = dual_forward(batch, weights, enc_cfg, step_stream)
            loss = info_nce_loss(h, h_plus, loss_cfg)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                _write_log(record.log_path, record.steps, record.losses, record.mean_rates)
                raise DivergenceError(step, last_finite)
            tape.backward(loss)
        optimizer.step()
        last_finite = loss_value
        rates = np.concatenate([rec0.all_rates(), rec1.all_rates()])
        record.steps.append(step)
        record.losses.append(loss_value)
        record.mean_rates.append(float(rates.mean()) if rates.size else 0.0)

        if config.eval_every and step % config.eval_every == 0:
            save_checkpoint(out_dir / f"checkpoint_step{step}.bin", weights, enc_cfg, vocab,
                            meta={**meta, "step": step})
            if sts:
                report = evaluate(weights, enc_cfg, sts, vocab, seed=config.seed,
                                  config_fingerprint=fingerprint)
                report.write_json(out_dir / f"eval_step{step}.json")
                report.write_csv(out_dir / f"eval_step{step}.csv")
                record.eval_reports.append((step, report))

    save_checkpoint(record.checkpoint_path, weights, enc_cfg, vocab,
                    meta={**meta, "step": config.steps})
    _write_log(record.log_path, record.steps, record.losses, record.mean_rates)
    record.wall_clock_s = time.perf_counter() - t0
    (out_dir / "run_record.json").write_text(
        json.dumps(record.to_json_dict(), indent=2) + "\n", encoding="utf-8")
    (out_dir / "config_resolved.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return record


def mean_pair_cosine(batch: Batch, weights: EncoderWeights, enc_cfg: EncoderConfig,
                     stream: RngStream) -> float:
    """Mean cosine between the two dropout views of each sentence."""
    h, h_plus, _ = dual_forward(batch, weights, enc_cfg, stream)
    a, b = h.data, h_plus.data
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    return float(np.mean((a * b).sum(axis=1) / (na * nb)))


def model_grad_check(
    enc_cfg: EncoderConfig,
    *,
    frozen_masks: bool = False,
    h: float = 1e-5,
    tol: float = 1e-4,
    seed: int = 0,
    loss_cfg: LossConfig | None = None,
    n_sentences: int = 2,
    n_tokens: int = 4,
) -> GradCheckReport:
    """Finite-difference check of every encoder parameter through the loss.

    With frozen_masks=False dropout is disabled entirely; with True the
    encoder runs in training mode but rebuilds the same streams per call,
    so each mask is a constant multiplier.
    """
    if enc_cfg.vocab_size < 3:
        raise ContractError("gradcheck needs vocab_size >= 3")
    lc = loss_cfg or LossConfig()
    root = RngStream(seed)
    weights = EncoderWeights.init(enc_cfg, root.fork("init"))
    id_stream = root.fork("tokens")
    n_tokens = min(n_tokens, enc_cfg.max_seq_len)
    ids = id_stream.integers(2, enc_cfg.vocab_size, size=(n_sentences, n_tokens))
    lengths = np.full(n_sentences, n_tokens)
    if n_sentences > 1 and n_tokens > 1:
        lengths[-1] = n_tokens - 1  # exercise padding in the checked graph
    mask = (np.arange(n_tokens)[None, :] < lengths[:, None]).astype(np.int64)
    batch = Batch(token_ids=ids * mask, attention_mask=mask, lengths=lengths)

    def build():
        stream = RngStream(seed).fork("gradcheck")
        view_a, _ = encode(batch, weights, enc_cfg, stream.fork(0), training=frozen_masks)
        view_b, _ = encode(batch, weights, enc_cfg, stream.fork(1), training=frozen_masks)
        return info_nce_loss(view_a, view_b, lc)

    return grad_check(build, dict(weights.items()), h=h, tol=tol)
