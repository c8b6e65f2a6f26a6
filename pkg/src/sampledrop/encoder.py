"""Toy transformer sentence encoder with configurable dropout sites.

Architecture: learned token + position embeddings, embedding layer norm,
then post-norm blocks of multi-head self-attention and a GELU feed-forward.
Dropout is applied at exactly three sites per block, each immediately
before a fully connected layer: the attention output projection and both
feed-forward projections. Attention probabilities are never dropout'd.

Padded positions are excluded from attention (masked softmax over keys) and
from pooling, and dropout masks are drawn on the full max_seq_len grid, so
appending padding to a batch never changes any embedding, bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .dropout import DropoutSpec, MaskRecord, apply_dropout, sample_forward_rates
from .errors import ContractError, DataError, DimensionError
from .rng import RngStream
from .tensor import Tensor

POOLING_MODES = ("mean_over_tokens", "first_token")
DROPOUT_SITES_PER_LAYER = 3


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 64
    max_seq_len: int = 32
    pooling: str = "mean_over_tokens"
    dropout: DropoutSpec = field(default_factory=lambda: DropoutSpec.sampled(0.0, 0.2))

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ContractError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.max_seq_len < 1:
            raise ContractError("max_seq_len must be >= 1")
        if self.pooling not in POOLING_MODES:
            raise ContractError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "max_seq_len": self.max_seq_len,
            "pooling": self.pooling,
            "dropout": self.dropout.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "EncoderConfig":
        return EncoderConfig(
            vocab_size=int(d["vocab_size"]),
            d_model=int(d["d_model"]),
            n_layers=int(d["n_layers"]),
            n_heads=int(d["n_heads"]),
            d_ff=int(d["d_ff"]),
            max_seq_len=int(d["max_seq_len"]),
            pooling=d["pooling"],
            dropout=DropoutSpec.from_dict(d["dropout"]),
        )


@dataclass
class Batch:
    """Padded token ids with a left-aligned attention mask."""

    token_ids: np.ndarray      # [N, T] int
    attention_mask: np.ndarray  # [N, T] in {0, 1}
    lengths: np.ndarray        # [N]

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        self.attention_mask = np.asarray(self.attention_mask, dtype=np.int64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        if self.token_ids.shape != self.attention_mask.shape:
            raise DimensionError(
                f"token_ids {self.token_ids.shape} and attention_mask "
                f"{self.attention_mask.shape} differ"
            )
        if not np.array_equal(self.attention_mask.sum(axis=1), self.lengths):
            raise ContractError("lengths must equal attention_mask row sums")
        # Mask must be a prefix of ones per row.
        diffs = np.diff(self.attention_mask, axis=1)
        if np.any(diffs > 0):
            raise ContractError("attention_mask must be a prefix of ones per row")

    @property
    def n(self) -> int:
        return self.token_ids.shape[0]

    @property
    def t(self) -> int:
        return self.token_ids.shape[1]


def _weight_shapes(config: EncoderConfig) -> dict[str, tuple[tuple[int, ...], int | None]]:
    """name -> (shape, fan_in); fan_in None means a constant init (LN/bias)."""
    d, dff = config.d_model, config.d_ff
    shapes: dict[str, tuple[tuple[int, ...], int | None]] = {
        "tok_emb": ((config.vocab_size, d), d),
        "pos_emb": ((config.max_seq_len, d), d),
        "emb_ln.gain": ((d,), None),
        "emb_ln.bias": ((d,), None),
    }
    for layer in range(config.n_layers):
        p = f"layers.{layer}"
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.attn.{proj}"] = ((d, d), d)
        for bias in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.attn.{bias}"] = ((d,), None)
        shapes[f"{p}.ln1.gain"] = ((d,), None)
        shapes[f"{p}.ln1.bias"] = ((d,), None)
        shapes[f"{p}.ffn.w1"] = ((d, dff), d)
        shapes[f"{p}.ffn.b1"] = ((dff,), None)
        shapes[f"{p}.ffn.w2"] = ((dff, d), dff)
        shapes[f"{p}.ffn.b2"] = ((d,), None)
        shapes[f"{p}.ln2.gain"] = ((d,), None)
        shapes[f"{p}.ln2.bias"] = ((d,), None)
    return shapes


class EncoderWeights:
    """Named parameter tensors; iteration order is the declaration order."""

    def __init__(self, params: dict[str, Tensor]):
        self.params = params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def items(self):
        return self.params.items()

    def names(self):
        return list(self.params.keys())

    def all_finite(self) -> bool:
        return all(p.is_finite() for p in self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    @staticmethod
    def init(config: EncoderConfig, stream: RngStream) -> "EncoderWeights":
        """Symmetric uniform scaled by 1/sqrt(fan_in); layer-norm gains 1.

        Each parameter draws from its own name-keyed stream, so the values
        do not depend on initialization order.
        """
        params: dict[str, Tensor] = {}
        for name, (shape, fan_in) in _weight_shapes(config).items():
            if fan_in is None:
                value = np.ones(shape) if name.endswith("gain") else np.zeros(shape)
            else:
                bound = 1.0 / math.sqrt(fan_in)
                value = (stream.fork(name).random(shape) * 2.0 - 1.0) * bound
            params[name] = Tensor(value, requires_grad=True)
        return EncoderWeights(params)


def pool(hidden: Tensor, attention_mask: np.ndarray, mode: str) -> Tensor:
    """Collapse [N, T, d] hidden states to one [N, d] vector per sentence."""
    if mode not in POOLING_MODES:
        raise ContractError(f"pooling mode must be one of {POOLING_MODES}, got {mode!r}")
    n, t, d = hidden.shape
    mask = np.asarray(attention_mask, dtype=np.float64)
    lengths = mask.sum(axis=1)
    if np.any(lengths == 0):
        raise DataError("cannot pool a zero-length sentence")
    if mode == "mean_over_tokens":
        coeff = mask / lengths[:, None]
    else:
        coeff = np.zeros((n, t))
        coeff[:, 0] = 1.0
    pooled = T.matmul(Tensor(coeff.reshape(n, 1, t)), hidden)
    return T.reshape(pooled, (n, d))


def _attention(x: Tensor, weights: EncoderWeights, layer: int, config: EncoderConfig,
               key_mask: np.ndarray) -> Tensor:
    n, t, d = x.shape
    h = config.n_heads
    dk = d // h
    p = f"layers.{layer}.attn"

    def heads(name_w, name_b):
        proj = T.add(T.matmul(x, weights[f"{p}.{name_w}"]), weights[f"{p}.{name_b}"])
        return T.transpose(T.reshape(proj, (n, t, h, dk)), (0, 2, 1, 3))

    q = heads("wq", "bq")
    k = heads("wk", "bk")
    v = heads("wv", "bv")
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dk))
    probs = T.softmax_rows(scores, mask=key_mask.reshape(n, 1, 1, t).astype(bool))
    context = T.matmul(probs, v)
    return T.reshape(T.transpose(context, (0, 2, 1, 3)), (n, t, d))


def encode(
    batch: Batch,
    weights: EncoderWeights,
    config: EncoderConfig,
    stream: RngStream,
    training: bool,
) -> tuple[Tensor, MaskRecord]:
    """One embedding per sentence, plus the record of dropout decisions.

    With training=False all dropout is disabled and the result is a pure
    function of (batch, weights).
    """
    ids = batch.token_ids
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise DataError(
            f"token id out of range [0, {config.vocab_size}): "
            f"min {ids.min()}, max {ids.max()}"
        )
    if batch.t > config.max_seq_len:
        raise DataError(f"sequence length {batch.t} exceeds max_seq_len {config.max_seq_len}")

    spec = config.dropout
    record = MaskRecord()
    forward_rates = None
    if training and spec.rate_scope == "per_forward":
        forward_rates = sample_forward_rates(spec, stream.fork("rate"), batch.n)

    def dropped(value: Tensor, layer: int, site: int, label: str) -> Tensor:
        site_stream = stream.fork("layer").fork(layer).fork(site)
        out, rec = apply_dropout(
            value, spec, site_stream, training,
            sample_rows=config.max_seq_len, rates=forward_rates,
        )
        for entry in rec.entries:
            entry.label = label
        record.extend(rec)
        return out

    tok = T.embedding_lookup(weights["tok_emb"], ids)
    pos = T.slice_rows(weights["pos_emb"], batch.t)
    x = T.layer_norm(T.add(tok, pos), weights["emb_ln.gain"], weights["emb_ln.bias"])

    key_mask = batch.attention_mask
    for layer in range(config.n_layers):
        p = f"layers.{layer}"
        context = _attention(x, weights, layer, config, key_mask)
        context = dropped(context, layer, 0, f"{p}.attn_out")
        attn_out = T.add(T.matmul(context, weights[f"{p}.attn.wo"]), weights[f"{p}.attn.bo"])
        x = T.layer_norm(T.add(x, attn_out), weights[f"{p}.ln1.gain"], weights[f"{p}.ln1.bias"])

        ffn_in = dropped(x, layer, 1, f"{p}.ffn_in")
        hidden = T.gelu(T.add(T.matmul(ffn_in, weights[f"{p}.ffn.w1"]), weights[f"{p}.ffn.b1"]))
        hidden = dropped(hidden, layer, 2, f"{p}.ffn_out")
        ffn_out = T.add(T.matmul(hidden, weights[f"{p}.ffn.w2"]), weights[f"{p}.ffn.b2"])
        x = T.layer_norm(T.add(x, ffn_out), weights[f"{p}.ln2.gain"], weights[f"{p}.ln2.bias"])

    return pool(x, batch.attention_mask, config.pooling), record


def dual_forward(
    batch: Batch,
    weights: EncoderWeights,
    config: EncoderConfig,
    stream: RngStream,
) -> tuple[Tensor, Tensor, tuple[MaskRecord, MaskRecord]]:
    """Encode the same batch twice with independent dropout streams."""
    h, rec0 = encode(batch, weights, config, stream.fork(0), training=True)
    h_plus, rec1 = encode(batch, weights, config, stream.fork(1), training=True)
    return h, h_plus, (rec0, rec1)
