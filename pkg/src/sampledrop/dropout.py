"""Dropout with a sampled drop rate, optionally resampled per sentence.

Rate semantics: a rate is always the DROP probability. An element survives
with probability 1 - rate, and with ``scaling="inverted"`` (the default)
surviving elements are multiplied by 1/(1 - rate) so the layer's expected
output matches evaluation mode regardless of which rate was drawn. The
literal keep-with-probability-p reading is reproducible with
``scaling="none"`` plus a distribution over keep probabilities, but nothing
in this package uses it.

Stream protocol: each dropout site forks substream 0 for rate draws and
substream 1 for mask draws, then forks by sentence index; the shared-mask
path always uses sentence slot 0. Keeping rates and masks on separate
substreams makes a collapsed uniform(p, p) distribution produce bit-identical
masks to degenerate(p), and the slot-0 convention makes sentence-wise
dropout at batch size 1 consume byte-identical draws to the shared path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .rng import RngStream
from .tensor import Tensor, mul

RATE_SUBSTREAM = 0
MASK_SUBSTREAM = 1

RATE_SCOPES = ("per_forward", "per_layer")
SCALINGS = ("inverted", "none")


@dataclass(frozen=True)
class DropoutDistribution:
    """Distribution the drop rate is sampled from: degenerate or uniform."""

    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("degenerate", "uniform"):
            raise ContractError(f"unknown distribution kind: {self.kind!r}")
        if not (0.0 <= self.lo <= self.hi < 1.0):
            raise ContractError(
                f"rate parameters must satisfy 0 <= lo <= hi < 1, got [{self.lo}, {self.hi}]"
            )
        if self.kind == "degenerate" and self.lo != self.hi:
            raise ContractError("degenerate distribution needs lo == hi")

    @staticmethod
    def degenerate(p: float) -> "DropoutDistribution":
        return DropoutDistribution("degenerate", p, p)

    @staticmethod
    def uniform(lo: float, hi: float) -> "DropoutDistribution":
        return DropoutDistribution("uniform", lo, hi)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}

    @staticmethod
    def from_dict(d: dict) -> "DropoutDistribution":
        return DropoutDistribution(d["kind"], float(d["lo"]), float(d["hi"]))


@dataclass(frozen=True)
class DropoutSpec:
    """Full dropout behavior: distribution, rate scope, mask scope, scaling.

    ``(degenerate(p), per_forward, sentence_wise=False)`` reproduces classic
    fixed-rate dropout exactly. ``rate_scope="per_layer"`` redraws the rate
    at every dropout site; ``"per_forward"`` draws once per forward pass.
    ``sentence_wise=True`` additionally redraws rate and mask per sentence,
    which requires batch-structured input (axis 0 indexes sentences).
    """

    distribution: DropoutDistribution
    rate_scope: str = "per_layer"
    sentence_wise: bool = False
    scaling: str = "inverted"

    def __post_init__(self):
        if self.rate_scope not in RATE_SCOPES:
            raise ContractError(f"rate_scope must be one of {RATE_SCOPES}, got {self.rate_scope!r}")
        if self.scaling not in SCALINGS:
            raise ContractError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")

    @staticmethod
    def fixed(p: float, scaling: str = "inverted") -> "DropoutSpec":
        return DropoutSpec(DropoutDistribution.degenerate(p), "per_forward", False, scaling)

    @staticmethod
    def sampled(
        lo: float,
        hi: float,
        sentence_wise: bool = False,
        rate_scope: str = "per_layer",
        scaling: str = "inverted",
    ) -> "DropoutSpec":
        return DropoutSpec(DropoutDistribution.uniform(lo, hi), rate_scope, sentence_wise, scaling)

    def to_dict(self) -> dict:
        return {
            "distribution": self.distribution.to_dict(),
            "rate_scope": self.rate_scope,
            "sentence_wise": self.sentence_wise,
            "scaling": self.scaling,
        }

    @staticmethod
    def from_dict(d: dict) -> "DropoutSpec":
        return DropoutSpec(
            DropoutDistribution.from_dict(d["distribution"]),
            d["rate_scope"],
            bool(d["sentence_wise"]),
            d["scaling"],
        )


@dataclass
class SiteRecord:
    """What one dropout site actually did in one forward pass."""

    label: str
    rates: np.ndarray            # one rate, or one per sentence
    mask: np.ndarray             # binary, exactly as applied (same shape as input)
    stream_path: tuple
    sentence_wise: bool
    scaling: str


@dataclass
class MaskRecord:
    """All dropout sites of one forward pass, in application order."""

    entries: list[SiteRecord] = field(default_factory=list)

    def add(self, entry: SiteRecord) -> None:
        self.entries.append(entry)

    def extend(self, other: "MaskRecord") -> None:
        self.entries.extend(other.entries)

    def n_sites(self) -> int:
        return len(self.entries)

    def all_rates(self) -> np.ndarray:
        if not self.entries:
            return np.empty(0)
        return np.concatenate([np.atleast_1d(e.rates) for e in self.entries])

    def mean_rate(self) -> float:
        rates = self.all_rates()
        return float(rates.mean()) if rates.size else 0.0


def sample_rate(dist: DropoutDistribution, stream: RngStream) -> float:
    """Draw one rate. Degenerate draws nothing; uniform consumes one deviate."""
    if dist.kind == "degenerate":
        return dist.lo
    return dist.lo + (dist.hi - dist.lo) * stream.uniform()


def sample_mask(rate: float, shape, stream: RngStream) -> np.ndarray:
    """Binary mask: each element 0 with probability ``rate``, else 1."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"mask rate must be in [0, 1), got {rate}")
    u = stream.random(shape)
    return (u >= rate).astype(np.float64)


def sample_forward_rates(spec: DropoutSpec, stream: RngStream, n_sentences: int) -> np.ndarray:
    """Rates for a whole forward pass (rate_scope="per_forward").

    Returns one rate per sentence slot; the shared path samples slot 0 only
    and broadcasts it.
    """
    if spec.sentence_wise:
        return np.array(
            [sample_rate(spec.distribution, stream.fork(i)) for i in range(n_sentences)]
        )
    rate = sample_rate(spec.distribution, stream.fork(0))
    return np.full(n_sentences, rate)


def apply_dropout(
    x: Tensor,
    spec: DropoutSpec,
    stream: RngStream,
    training: bool,
    *,
    sample_rows: int | None = None,
    rates: np.ndarray | None = None,
) -> tuple[Tensor, MaskRecord]:
    """Mask ``x``; the gradient through the site is mask times scale.

    ``sample_rows``: draw the mask on a (sample_rows, ...) grid per sentence
    and keep the first rows actually present. Sampling on the full grid makes
    the result independent of how much padding the batch carries.
    ``rates``: pre-sampled per-sentence rates (per-forward scope); when
    omitted the site draws its own from its rate substream.
    """
    record = MaskRecord()
    if not training:
        return x, record

    if sample_rows is not None and x.ndim < 2:
        raise ContractError("sample_rows needs batch-structured input of rank >= 2")
    if spec.sentence_wise and x.ndim < 2:
        raise ContractError("sentence_wise dropout needs batch-structured input of rank >= 2")

    rate_stream = stream.fork(RATE_SUBSTREAM)
    mask_stream = stream.fork(MASK_SUBSTREAM)

    if x.ndim >= 2:
        n_rows = x.shape[1]
        grid_rows = n_rows if sample_rows is None else int(sample_rows)
        if grid_rows < n_rows:
            raise ContractError(f"sample_rows {grid_rows} smaller than input rows {n_rows}")
        per_sentence_grid = (grid_rows,) + x.shape[2:]

    if spec.sentence_wise:
        n = x.shape[0]
        mask = np.empty(x.shape)
        rates_out = np.empty(n)
        for i in range(n):
            if rates is not None:
                rate = float(rates[i])
            else:
                rate = sample_rate(spec.distribution, rate_stream.fork(i))
            grid = sample_mask(rate, per_sentence_grid, mask_stream.fork(i))
            mask[i] = grid[: x.shape[1]]
            rates_out[i] = rate
    else:
        if rates is not None:
            rate = float(np.atleast_1d(rates)[0])
        else:
            rate = sample_rate(spec.distribution, rate_stream.fork(0))
        if x.ndim >= 2:
            grid = sample_mask(rate, (x.shape[0],) + per_sentence_grid, mask_stream.fork(0))
            mask = grid[:, : x.shape[1]]
        else:
            mask = sample_mask(rate, x.shape, mask_stream.fork(0))
        rates_out = np.array([rate])

    if spec.scaling == "inverted":
        if spec.sentence_wise:
            keep = 1.0 - rates_out.reshape((-1,) + (1,) * (x.ndim - 1))
            multiplier = mask / keep
        else:
            multiplier = mask / (1.0 - rates_out[0])
    else:
        multiplier = mask

    out = mul(x, Tensor(multiplier))
    record.add(
        SiteRecord(
            label="",
            rates=rates_out,
            mask=mask,
            stream_path=stream.path,
            sentence_wise=spec.sentence_wise,
            scaling=spec.scaling,
        )
    )
    return out, record
