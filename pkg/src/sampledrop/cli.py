"""Command-line entry points.

Subcommands: train, eval, ablate, gradcheck, make-synth-sts, embed, serve.
Exit code 0 on success; on failure a single machine-parsable line
`error: <category>: <message>` goes to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .ablation import ablate
from .checkpoint import load_checkpoint
from .config import METHODS, TrainConfig, config_from_mapping, parse_config_file
from .data import build_vocab, load_corpus, parse_sts_tsv, write_sts_tsv
from .encoder import EncoderConfig
from .errors import ContractError, SampledropError
from .evaluation import embed_sentences, evaluate
from .rng import RngStream
from .synth import make_synthetic_corpus, make_synthetic_sts
from .training import model_grad_check, train


def _load_config(args) -> TrainConfig:
    config = parse_config_file(args.config) if args.config else TrainConfig()
    overrides = dict(getattr(args, "set", None) or [])
    if overrides:
        merged = {k: v for k, v in config.to_dict().items() if k != "sts_datasets"}
        merged.update({f"sts.{n}": p for n, p in config.sts_datasets.items()})
        merged.update(overrides)
        config = config_from_mapping(merged)
    return config


def _split_kv(raw: str) -> tuple[str, str]:
    if "=" not in raw:
        raise ContractError(f"expected key=value, got {raw!r}")
    key, _, value = raw.partition("=")
    return key.strip(), value.strip()


def cmd_train(args) -> int:
    record = train(_load_config(args))
    print(f"trained {len(record.steps)} steps, final loss {record.final_loss:.6f}")
    print(f"checkpoint: {record.checkpoint_path}")
    print(f"log: {record.log_path}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if not args.sts:
        raise ContractError("eval needs at least one --sts name=path")
    datasets = {}
    for raw in args.sts:
        name, path = _split_kv(raw)
        datasets[name] = parse_sts_tsv(path)
    report = evaluate(
        ckpt.weights, ckpt.config, datasets, ckpt.vocab,
        batch_size=args.batch_size,
        seed=ckpt.meta.get("seed"),
        config_fingerprint=ckpt.meta.get("config_fingerprint", ""),
    )
    out_json = args.out_json or "eval_report.json"
    out_csv = args.out_csv or "eval_report.csv"
    report.write_json(out_json)
    report.write_csv(out_csv)
    for score in report.datasets:
        print(f"{score.dataset}: spearman {score.spearman:.4f} over {score.n_pairs} pairs")
    for note in report.skipped:
        print(f"warning: {note}", file=sys.stderr)
    print(f"aggregate: {report.aggregate:.4f}")
    print(f"reports: {out_json} {out_csv}")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    result = ablate(config, methods, seeds, out_dir=args.out_dir)
    for row in result.rows:
        if row.avg is None:
            print(f"{row.method}: all {row.n_seeds} runs failed")
        else:
            print(f"{row.method}: avg {row.avg:.4f} +/- {row.std:.4f}, max {row.max:.4f} "
                  f"({row.n_completed}/{row.n_seeds} runs)")
    failed = [c for c in result.cells if c.error]
    for cell in failed:
        print(f"warning: {cell.method} seed {cell.seed}: {cell.error}", file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    if args.config:
        config = parse_config_file(args.config)
        enc_cfg = config.encoder_config(vocab_size=args.vocab_size)
        loss_cfg = config.loss_config()
    else:
        # Small standalone model: every parameter group, fast to difference.
        enc_cfg = EncoderConfig(vocab_size=args.vocab_size, d_model=8, n_layers=2,
                                n_heads=2, d_ff=16, max_seq_len=8)
        loss_cfg = None
    report = model_grad_check(
        enc_cfg, frozen_masks=args.frozen_masks, h=args.step, tol=args.tolerance,
        seed=args.seed, loss_cfg=loss_cfg,
    )
    for entry in report.entries:
        status = "PASS" if entry.passed else "FAIL"
        print(f"{status} {entry.name} max_rel_err={entry.max_rel_err:.3e}")
    if not report.passed:
        worst = report.worst()
        print(f"error: gradcheck: worst parameter {worst.name} "
              f"relative error {worst.max_rel_err:.3e} exceeds {report.tol}", file=sys.stderr)
        return 1
    print(f"gradcheck passed: {len(report.entries)} parameter groups, tol {report.tol}")
    return 0


def cmd_make_synth_sts(args) -> int:
    stream = RngStream(args.seed)
    if args.corpus:
        sentences = load_corpus(args.corpus)
        corpus_path = args.corpus
    else:
        if not args.corpus_out:
            raise ContractError("make-synth-sts needs --corpus or --corpus-out")
        sentences = make_synthetic_corpus(stream.fork("corpus"), args.n_sentences,
                                          n_words=args.n_words)
        Path(args.corpus_out).write_text("\n".join(sentences) + "\n", encoding="utf-8")
        corpus_path = args.corpus_out
    vocab = build_vocab(sentences, min_count=args.min_count)
    examples = make_synthetic_sts(stream.fork("pairs"), args.n_pairs, vocab)
    write_sts_tsv(args.out, examples)
    print(f"corpus: {corpus_path} ({len(sentences)} sentences)")
    print(f"sts: {args.out} ({len(examples)} pairs)")
    return 0


def cmd_embed(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    sentences = load_corpus(args.input)
    emb = embed_sentences(sentences, ckpt.weights, ckpt.config, ckpt.vocab,
                          batch_size=args.batch_size)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sentence"] + [f"dim{i}" for i in range(emb.shape[1])])
        for sentence, row in zip(sentences, emb):
            writer.writerow([sentence] + [repr(v) for v in row])
    print(f"wrote {emb.shape[0]} embeddings of dim {emb.shape[1]} to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sampledrop",
        description="Contrastive sentence-embedding training with sampled dropout rates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training job from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", type=_split_kv, metavar="KEY=VALUE",
                   help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on sts datasets")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sts", action="append", metavar="NAME=PATH")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="method-by-seed sweep with a summary table")
    p.add_argument("--config", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--out-dir")
    p.add_argument("--set", action="append", type=_split_kv, metavar="KEY=VALUE")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--config")
    p.add_argument("--frozen-masks", action="store_true",
                   help="training mode with frozen dropout masks instead of no dropout")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=16)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-synth-sts", help="generate an overlap-scored pair set")
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", help="existing corpus to take the vocabulary from")
    p.add_argument("--corpus-out", help="generate a synthetic corpus here instead")
    p.add_argument("--n-pairs", type=int, default=100)
    p.add_argument("--n-sentences", type=int, default=200)
    p.add_argument("--n-words", type=int, default=40)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synth_sts)

    p = sub.add_parser("embed", help="dump eval-mode embeddings for a sentence file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="one sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SampledropError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
