"""FastAPI service wrapping the core package.

Every endpoint is a synchronous call into the library; at desk scale even
training completes within a request. Paths in requests are interpreted on
the server's filesystem. Deliberate failures surface as HTTP 400 with the
same `category: message` detail the CLI prints.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..ablation import ablate
from ..checkpoint import load_checkpoint
from ..config import config_from_mapping
from ..data import build_vocab, load_corpus, parse_sts_tsv, write_sts_tsv
from ..encoder import EncoderConfig
from ..errors import ContractError, SampledropError
from ..evaluation import embed_sentences, evaluate
from ..rng import RngStream
from ..synth import make_synthetic_corpus, make_synthetic_sts
from ..training import model_grad_check, train
from . import schemas


def _bad_request(exc: SampledropError) -> HTTPException:
    return HTTPException(status_code=400, detail=f"{exc.category}: {exc}")


def create_app() -> FastAPI:
    app = FastAPI(
        title="sampledrop",
        description="Contrastive sentence embeddings with sampled dropout rates",
        version=__version__,
    )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.TrainRequest):
        try:
            config = config_from_mapping(req.config)
            record = train(config)
        except SampledropError as exc:
            raise _bad_request(exc) from exc
        return schemas.TrainResponse(
            output_dir=record.output_dir,
            checkpoint=record.checkpoint_path,
            log=record.log_path,
            steps=len(record.steps),
            final_loss=record.final_loss,
            wall_clock_s=record.wall_clock_s,
            config_fingerprint=record.config_fingerprint,
            evals=[
                schemas.EvalStepSummary(step=step, aggregate=report.aggregate)
                for step, report in record.eval_reports
            ],
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_endpoint(req: schemas.EvaluateRequest):
        try:
            ckpt = load_checkpoint(req.checkpoint)
            datasets = {name: parse_sts_tsv(path) for name, path in req.datasets.items()}
            report = evaluate(
                ckpt.weights, ckpt.config, datasets, ckpt.vocab,
                batch_size=req.batch_size,
                seed=ckpt.meta.get("seed"),
                config_fingerprint=ckpt.meta.get("config_fingerprint", ""),
            )
        except SampledropError as exc:
            raise _bad_request(exc) from exc
        return schemas.EvaluateResponse(
            datasets=[
                schemas.DatasetScoreModel(dataset=s.dataset, spearman=s.spearman, n_pairs=s.n_pairs)
                for s in report.datasets
            ],
            aggregate=report.aggregate,
            seed=report.seed,
            config_fingerprint=report.config_fingerprint,
            skipped=report.skipped,
        )

    @app.post("/embed", response_model=schemas.EmbedResponse)
    def embed_endpoint(req: schemas.EmbedRequest):
        try:
            if not req.sentences:
                raise ContractError("embed needs at least one sentence")
            ckpt = load_checkpoint(req.checkpoint)
            emb = embed_sentences(req.sentences, ckpt.weights, ckpt.config, ckpt.vocab,
                                  batch_size=req.batch_size)
        except SampledropError as exc:
            raise _bad_request(exc) from exc
        return schemas.EmbedResponse(embeddings=emb.tolist(), dim=emb.shape[1])

    @app.post("/ablate", response_model=schemas.AblateResponse)
    def ablate_endpoint(req: schemas.AblateRequest):
        try:
            config = config_from_mapping(req.config)
            result = ablate(config, req.methods, req.seeds, out_dir=req.output_dir)
        except SampledropError as exc:
            raise _bad_request(exc) from exc
        return schemas.AblateResponse(
            rows=[schemas.AblationRowModel(**vars(r)) for r in result.rows],
            cells=[schemas.AblationCellModel(**vars(c)) for c in result.cells],
            selection=result.selection,
            top_k=result.top_k,
        )

    @app.post("/gradcheck", response_model=schemas.GradcheckResponse)
    def gradcheck_endpoint(req: schemas.GradcheckRequest):
        try:
            if req.config:
                config = config_from_mapping(req.config)
                enc_cfg = config.encoder_config(vocab_size=req.vocab_size)
                loss_cfg = config.loss_config()
            else:
                enc_cfg = EncoderConfig(vocab_size=req.vocab_size, d_model=8, n_layers=2,
                                        n_heads=2, d_ff=16, max_seq_len=8)
                loss_cfg = None
            report = model_grad_check(
                enc_cfg, frozen_masks=req.frozen_masks, h=req.step,
                tol=req.tolerance, seed=req.seed, loss_cfg=loss_cfg,
            )
        except SampledropError as exc:
            raise _bad_request(exc) from exc
        entries = [
            schemas.GradcheckEntryModel(name=e.name, max_rel_err=e.max_rel_err, passed=e.passed)
            for e in report.entries
        ]
        worst = report.worst()
        return schemas.GradcheckResponse(
            passed=report.passed,
            tolerance=report.tol,
            entries=entries,
            worst=schemas.GradcheckEntryModel(
                name=worst.name, max_rel_err=worst.max_rel_err, passed=worst.passed),
        )

    @app.post("/synth-sts", response_model=schemas.SynthResponse)
    def synth_endpoint(req: schemas.SynthRequest):
        try:
            stream = RngStream(req.seed)
            if req.corpus:
                sentences = load_corpus(req.corpus)
                corpus_path = req.corpus
            else:
                if not req.corpus_out:
                    raise ContractError("synth-sts needs corpus or corpus_out")
                sentences = make_synthetic_corpus(stream.fork("corpus"), req.n_sentences,
                                                  n_words=req.n_words)
                with open(req.corpus_out, "w", encoding="utf-8") as fh:
                    fh.write("\n".join(sentences) + "\n")
                corpus_path = req.corpus_out
            vocab = build_vocab(sentences, min_count=req.min_count)
            examples = make_synthetic_sts(stream.fork("pairs"), req.n_pairs, vocab)
            write_sts_tsv(req.out, examples)
        except SampledropError as exc:
            raise _bad_request(exc) from exc
        return schemas.SynthResponse(
            sts_path=req.out,
            corpus_path=corpus_path,
            n_pairs=len(examples),
            n_sentences=len(sentences),
        )

    return app


app = create_app()
