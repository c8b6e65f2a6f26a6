"""Synthetic desk-scale data: a pseudo-word corpus and an overlap-scored
sentence-pair set.

Gold scores are 5 * |A intersect B| / |A union B| over token multisets, so
identical sentences score 5.0 and disjoint ones 0.0, with graded values in
between. Pair construction copies a sentence and rewrites a random subset
of positions, which spreads the overlap fraction across the whole range.
"""

from __future__ import annotations

from collections import Counter

from .data import StsExample, Vocabulary
from .errors import ContractError
from .rng import RngStream

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def word_pool(n_words: int) -> list[str]:
    """Deterministic pseudo-words: two consonant-vowel syllables."""
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    pool = []
    for first in syllables:
        for second in syllables:
            pool.append(first + second)
            if len(pool) == n_words:
                return pool
    raise ContractError(f"cannot build {n_words} distinct pseudo-words")


def multiset_overlap_score(tokens_a, tokens_b) -> float:
    """5 * multiset-Jaccard of the two token lists."""
    ca, cb = Counter(tokens_a), Counter(tokens_b)
    inter = sum(min(ca[t], cb[t]) for t in ca.keys() & cb.keys())
    union = sum((ca | cb).values())
    if union == 0:
        return 5.0
    return 5.0 * inter / union


def make_synthetic_corpus(
    stream: RngStream,
    n_sentences: int,
    n_words: int = 40,
    min_len: int = 5,
    max_len: int = 9,
) -> list[str]:
    pool = word_pool(n_words)
    sentences = []
    for i in range(n_sentences):
        s = stream.fork(i)
        length = int(s.integers(min_len, max_len + 1))
        picks = s.integers(0, len(pool), size=length)
        sentences.append(" ".join(pool[p] for p in picks))
    return sentences


def make_synthetic_sts(
    stream: RngStream,
    n_pairs: int,
    vocab: Vocabulary,
    min_len: int = 5,
    max_len: int = 9,
) -> list[StsExample]:
    """Overlap-graded pairs drawn from the vocabulary's real tokens."""
    pool = vocab.tokens()
    if not pool:
        raise ContractError("vocabulary has no non-reserved tokens")
    examples = []
    for i in range(n_pairs):
        s = stream.fork(i)
        length = int(s.integers(min_len, max_len + 1))
        first = [pool[p] for p in s.integers(0, len(pool), size=length)]
        second = list(first)
        n_edits = int(s.integers(0, length + 1))
        for pos in s.permutation(length)[:n_edits]:
            second[pos] = pool[int(s.integers(0, len(pool)))]
        if s.uniform() < 0.5:
            second = [second[p] for p in s.permutation(len(second))]
        gold = multiset_overlap_score(first, second)
        examples.append(StsExample(" ".join(first), " ".join(second), gold))
    return examples
