"""Run configuration: flat `key = value` files with hard-error unknown keys.

Every key has a default except the paths, which each command validates for
itself. `sts.<name> = <path>` keys declare evaluation datasets. Unknown
keys are rejected outright so a typo in an ablation sweep fails loudly
instead of silently training with a default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dropout import DropoutDistribution, DropoutSpec, RATE_SCOPES, SCALINGS
from .encoder import POOLING_MODES, EncoderConfig
from .errors import ContractError, DataError
from .loss import DENOMINATOR_MODES, LossConfig

METHODS = ("fixed", "sampled", "sampled_sentence_wise")
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    corpus: str = ""
    output_dir: str = ""
    sts_datasets: dict[str, str] = field(default_factory=dict)

    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 64
    max_seq_len: int = 32
    pooling: str = "mean_over_tokens"

    min_count: int = 1
    max_vocab: int = 8192

    method: str = "sampled_sentence_wise"
    dropout_rate: float = 0.1
    rate_low: float = 0.0
    rate_high: float = 0.2
    rate_scope: str = "per_layer"
    dropout_scaling: str = "inverted"

    temperature: float = 0.05
    denominator_mode: str = "positives_of_all"

    optimizer: str = "adam"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    batch_size: int = 16
    steps: int = 200
    eval_every: int = 0
    seed: int = 0

    def dropout_spec(self) -> DropoutSpec:
        """method=fixed forces a degenerate distribution at dropout_rate."""
        if self.method == "fixed":
            dist = DropoutDistribution.degenerate(self.dropout_rate)
            sentence_wise = False
        else:
            dist = DropoutDistribution.uniform(self.rate_low, self.rate_high)
            sentence_wise = self.method == "sampled_sentence_wise"
        return DropoutSpec(dist, self.rate_scope, sentence_wise, self.dropout_scaling)

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            d_ff=self.d_ff,
            max_seq_len=self.max_seq_len,
            pooling=self.pooling,
            dropout=self.dropout_spec(),
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(temperature=self.temperature, denominator_mode=self.denominator_mode)

    def to_dict(self) -> dict:
        d = {
            name: getattr(self, name)
            for name in _FIELD_PARSERS
        }
        d["sts_datasets"] = dict(self.sts_datasets)
        return d

    def behavioral_dict(self) -> dict:
        """Config without path fields; what identifies the run's behavior."""
        d = self.to_dict()
        for key in ("corpus", "output_dir", "sts_datasets"):
            d.pop(key)
        return d

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)

    def validate(self, for_train: bool = False) -> None:
        if self.method not in METHODS:
            raise ContractError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ContractError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.pooling not in POOLING_MODES:
            raise ContractError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.rate_scope not in RATE_SCOPES:
            raise ContractError(f"rate_scope must be one of {RATE_SCOPES}, got {self.rate_scope!r}")
        if self.dropout_scaling not in SCALINGS:
            raise ContractError(f"dropout_scaling must be one of {SCALINGS}")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ContractError(f"denominator_mode must be one of {DENOMINATOR_MODES}")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.steps < 1:
            raise ContractError("steps must be >= 1")
        if self.eval_every < 0:
            raise ContractError("eval_every must be >= 0")
        if self.temperature <= 0:
            raise ContractError("temperature must be > 0")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be > 0")
        self.dropout_spec()  # validates rate parameters
        self.encoder_config(vocab_size=4)  # validates head divisibility etc.
        if for_train:
            if not self.corpus:
                raise ContractError("config key 'corpus' is required for training")
            if not self.output_dir:
                raise ContractError("config key 'output_dir' is required for training")
            if not os.path.exists(self.corpus):
                raise DataError(f"corpus path does not exist: {self.corpus}")
            for name, path in self.sts_datasets.items():
                if not os.path.exists(path):
                    raise DataError(f"sts dataset {name!r} path does not exist: {path}")


def _parse_bool(raw: str) -> bool:
    low = str(raw).strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ContractError(f"expected a boolean, got {raw!r}")


_FIELD_PARSERS = {
    "corpus": str,
    "output_dir": str,
    "d_model": int,
    "n_layers": int,
    "n_heads": int,
    "d_ff": int,
    "max_seq_len": int,
    "pooling": str,
    "min_count": int,
    "max_vocab": int,
    "method": str,
    "dropout_rate": float,
    "rate_low": float,
    "rate_high": float,
    "rate_scope": str,
    "dropout_scaling": str,
    "temperature": float,
    "denominator_mode": str,
    "optimizer": str,
    "learning_rate": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "batch_size": int,
    "steps": int,
    "eval_every": int,
    "seed": int,
}


def config_from_mapping(mapping: dict) -> TrainConfig:
    """Build a TrainConfig from string or typed values; unknown keys fail."""
    kwargs: dict = {}
    sts: dict[str, str] = {}
    for key, raw in mapping.items():
        if key.startswith("sts."):
            name = key[len("sts."):]
            if not name:
                raise ContractError("sts dataset key needs a name: sts.<name>")
            sts[name] = str(raw)
            continue
        parser = _FIELD_PARSERS.get(key)
        if parser is None:
            raise ContractError(f"unknown config key: {key!r}")
        try:
            if parser is int:
                kwargs[key] = int(str(raw))
            elif parser is float:
                kwargs[key] = float(str(raw))
            elif parser is bool:
                kwargs[key] = _parse_bool(raw)
            else:
                kwargs[key] = str(raw)
        except ValueError:
            raise ContractError(f"config key {key!r}: cannot parse value {raw!r}") from None
    config = TrainConfig(sts_datasets=sts, **kwargs)
    config.validate(for_train=False)
    return config


def parse_config_file(path) -> TrainConfig:
    """Flat UTF-8 `key = value` lines; `#` starts a comment; typos are fatal."""
    mapping: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise DataError(f"{path}:{lineno}: missing key before '='")
        if key in mapping:
            raise DataError(f"{path}:{lineno}: duplicate key {key!r}")
        mapping[key] = value
    try:
        return config_from_mapping(mapping)
    except ContractError as exc:
        raise ContractError(f"{path}: {exc}") from None
