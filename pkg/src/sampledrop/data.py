"""Corpus loading, whitespace tokenization, STS TSV parsing and batching."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import Batch
from .errors import ContractError, DataError
from .rng import RngStream

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class Vocabulary:
    """token <-> dense id map with reserved ids 0=PAD and 1=UNK."""

    def __init__(self, tokens: list[str], min_count: int = 1):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        self.min_count = min_count
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        return self.id_to_token[token_id]

    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order (id = position + 2)."""
        return self.id_to_token[2:]

    @staticmethod
    def from_tokens(tokens: list[str]) -> "Vocabulary":
        return Vocabulary(tokens)

    def save(self, path) -> None:
        """One token per line; line number = id - 2."""
        Path(path).write_text("\n".join(self.tokens()) + "\n", encoding="utf-8")

    @staticmethod
    def load(path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return Vocabulary([line for line in lines if line])


@dataclass
class CorpusStats:
    n_sentences: int
    n_tokens: int
    vocab_size: int
    max_length: int


def load_corpus(path) -> list[str]:
    """One sentence per line; blank lines dropped."""
    text = Path(path).read_text(encoding="utf-8")
    sentences = [line.strip() for line in text.splitlines()]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise DataError(f"{path}: corpus is empty")
    return sentences


def build_vocab(lines, min_count: int = 1, max_size: int = 65536) -> Vocabulary:
    """Lowercased whitespace tokens with frequency >= min_count.

    Most frequent first; ties broken lexicographically so the build is
    deterministic. Truncated to max_size - 2 to leave room for PAD/UNK.
    """
    if min_count < 1:
        raise ContractError(f"min_count must be >= 1, got {min_count}")
    counts: dict[str, int] = {}
    for line in lines:
        for token in line.lower().split():
            counts[token] = counts.get(token, 0) + 1
    if not counts:
        raise DataError("empty corpus: no tokens to build a vocabulary from")
    kept = [tok for tok, c in counts.items() if c >= min_count]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocabulary(kept[: max(0, max_size - 2)], min_count=min_count)


def corpus_stats(lines, vocab: Vocabulary) -> CorpusStats:
    token_counts = [len(line.lower().split()) for line in lines]
    return CorpusStats(
        n_sentences=len(lines),
        n_tokens=sum(token_counts),
        vocab_size=len(vocab),
        max_length=max(token_counts) if token_counts else 0,
    )


def tokenize(text: str, vocab: Vocabulary, max_seq_len: int) -> list[int]:
    """Lowercase, split on whitespace, map unknowns to UNK, truncate.

    Empty text yields a single UNK so no sentence is ever empty.
    """
    ids = [vocab.id(token) for token in text.lower().split()]
    if not ids:
        ids = [UNK_ID]
    return ids[:max_seq_len]


@dataclass(frozen=True)
class StsExample:
    sentence_a: str
    sentence_b: str
    gold_score: float


def parse_sts_tsv(path) -> list[StsExample]:
    """Three tab-separated fields per line: sentence, sentence, score."""
    examples = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
        try:
            score = float(fields[2])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric score {fields[2]!r}") from None
        if not np.isfinite(score):
            raise DataError(f"{path}:{lineno}: non-finite score {fields[2]!r}")
        examples.append(StsExample(fields[0], fields[1], score))
    return examples


def write_sts_tsv(path, examples) -> None:
    lines = [f"{ex.sentence_a}\t{ex.sentence_b}\t{ex.gold_score}" for ex in examples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def batch_from_ids(id_lists: list[list[int]]) -> Batch:
    """Pad a list of id sequences to the batch maximum length."""
    n = len(id_lists)
    t = max(len(ids) for ids in id_lists)
    token_ids = np.full((n, t), PAD_ID, dtype=np.int64)
    mask = np.zeros((n, t), dtype=np.int64)
    for i, ids in enumerate(id_lists):
        token_ids[i, : len(ids)] = ids
        mask[i, : len(ids)] = 1
    return Batch(token_ids=token_ids, attention_mask=mask, lengths=mask.sum(axis=1))


def make_batches(
    sentences: list[str],
    vocab: Vocabulary,
    batch_size: int,
    max_seq_len: int,
    shuffle_stream: RngStream | None = None,
) -> list[Batch]:
    """Shuffled, padded batches covering every sentence exactly once.

    The final partial batch is kept. With shuffle_stream=None the corpus
    order is preserved (evaluation path).
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(sentences))
    if shuffle_stream is not None:
        order = shuffle_stream.permutation(len(sentences))
    batches = []
    for start in range(0, len(sentences), batch_size):
        chunk = order[start : start + batch_size]
        id_lists = [tokenize(sentences[i], vocab, max_seq_len) for i in chunk]
        batches.append(batch_from_ids(id_lists))
    return batches
