"""Corpus loading, vocabulary builds, tokenization, TSV parsing, batching."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampledrop.data import (
    PAD_ID,
    UNK_ID,
    Vocabulary,
    batch_from_ids,
    build_vocab,
    corpus_stats,
    load_corpus,
    make_batches,
    parse_sts_tsv,
    tokenize,
    write_sts_tsv,
    StsExample,
)
from sampledrop.errors import ContractError, DataError
from sampledrop.rng import RngStream
from sampledrop.synth import make_synthetic_corpus, multiset_overlap_score


class TestVocab:
    def test_basic_build(self):
        vocab = build_vocab(["a a b"], min_count=1)
        assert len(vocab) == 4
        assert vocab.id("a") == 2 and vocab.id("b") == 3  # a more frequent

    def test_min_count_filters(self):
        vocab = build_vocab(["a a b"], min_count=2)
        assert vocab.tokens() == ["a"]
        assert vocab.id("b") == UNK_ID

    def test_tie_break_lexicographic(self):
        vocab = build_vocab(["z a"], min_count=1)
        assert vocab.id("a") < vocab.id("z")

    def test_lowercasing(self):
        vocab = build_vocab(["The THE the"], min_count=3)
        assert vocab.tokens() == ["the"]

    def test_max_size_truncates(self):
        vocab = build_vocab(["a a a b b c"], max_size=3)
        assert vocab.tokens() == ["a"]

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            build_vocab(["   ", ""])
        with pytest.raises(ContractError):
            build_vocab(["a"], min_count=0)

    def test_deterministic_serialization(self, tmp_path):
        lines = ["b a c a", "c c b"]
        p1, p2 = tmp_path / "v1.txt", tmp_path / "v2.txt"
        build_vocab(lines).save(p1)
        build_vocab(list(lines)).save(p2)
        assert p1.read_bytes() == p2.read_bytes()
        loaded = Vocabulary.load(p1)
        assert loaded.id_to_token == build_vocab(lines).id_to_token

    def test_round_trip_token_ids(self):
        vocab = build_vocab(["alpha beta gamma alpha"])
        for token in vocab.tokens():
            assert tokenize(vocab.token(vocab.id(token)), vocab, 8) == [vocab.id(token)]


class TestTokenize:
    def test_lowercases(self):
        vocab = build_vocab(["a"])
        assert tokenize("A a", vocab, 8) == [vocab.id("a"), vocab.id("a")]

    def test_unknown_maps_to_unk(self):
        vocab = build_vocab(["a"])
        assert tokenize("qqq", vocab, 8) == [UNK_ID]

    def test_truncation(self):
        vocab = build_vocab(["tok"])
        assert len(tokenize("tok " * 100, vocab, 32)) == 32

    def test_empty_text_gives_single_unk(self):
        vocab = build_vocab(["a"])
        assert tokenize("", vocab, 8) == [UNK_ID]
        assert tokenize("   ", vocab, 8) == [UNK_ID]

    @given(st.text(alphabet=st.characters(whitelist_categories=["Ll", "Zs"]), max_size=50))
    @settings(max_examples=60, deadline=None)
    def test_never_empty_and_in_range(self, text):
        vocab = build_vocab(["a b c"])
        ids = tokenize(text, vocab, 8)
        assert 1 <= len(ids) <= 8
        assert all(0 <= i < len(vocab) for i in ids)


class TestStsTsv:
    def test_parse_basic(self, tmp_path):
        path = tmp_path / "sts.tsv"
        path.write_text("a cat\ta feline\t4.5\n", encoding="utf-8")
        examples = parse_sts_tsv(path)
        assert examples == [StsExample("a cat", "a feline", 4.5)]

    def test_wrong_field_count_names_line(self, tmp_path):
        path = tmp_path / "sts.tsv"
        path.write_text("good\tpair\t1.0\nbad\tpair\n", encoding="utf-8")
        with pytest.raises(DataError, match=":2"):
            parse_sts_tsv(path)

    def test_non_numeric_score_names_line(self, tmp_path):
        path = tmp_path / "sts.tsv"
        path.write_text("a\tb\thigh\n", encoding="utf-8")
        with pytest.raises(DataError, match=":1"):
            parse_sts_tsv(path)

    def test_trailing_newline_no_phantom(self, tmp_path):
        path = tmp_path / "sts.tsv"
        path.write_text("a\tb\t1.0\nc\td\t2.0\n", encoding="utf-8")
        assert len(parse_sts_tsv(path)) == 2

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "sts.tsv"
        path.write_text("a\tb\t1.0\n\n\nc\td\t2.0\n", encoding="utf-8")
        assert len(parse_sts_tsv(path)) == 2

    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "sts.tsv"
        examples = [StsExample("x y", "y z", 1.25), StsExample("q", "q", 5.0)]
        write_sts_tsv(path, examples)
        assert parse_sts_tsv(path) == examples


class TestBatching:
    def _vocab(self):
        return build_vocab(["a b c d e f g h"])

    def test_batch_sizes(self):
        vocab = self._vocab()
        sentences = ["a b", "c", "d e f", "g", "h"]
        batches = make_batches(sentences, vocab, 2, 8, RngStream(0).fork("shuffle"))
        assert [b.n for b in batches] == [2, 2, 1]

    def test_same_stream_identical(self):
        vocab = self._vocab()
        sentences = [f"a b {t}" for t in "cdefgh"]
        a = make_batches(sentences, vocab, 3, 8, RngStream(5).fork("shuffle"))
        b = make_batches(sentences, vocab, 3, 8, RngStream(5).fork("shuffle"))
        for ba, bb in zip(a, b):
            np.testing.assert_array_equal(ba.token_ids, bb.token_ids)

    def test_padding_marks(self):
        vocab = self._vocab()
        batch = batch_from_ids([[2, 3, 4], [5]])
        assert batch.token_ids[1, 1] == PAD_ID and batch.token_ids[1, 2] == PAD_ID
        np.testing.assert_array_equal(batch.attention_mask, [[1, 1, 1], [1, 0, 0]])
        np.testing.assert_array_equal(batch.lengths, [3, 1])

    def test_epoch_partition(self):
        vocab = self._vocab()
        sentences = [f"a {t}" for t in "bcdefgh"]
        batches = make_batches(sentences, vocab, 3, 8, RngStream(1).fork("shuffle"))
        total = sum(b.n for b in batches)
        assert total == len(sentences)
        # Every sentence's token multiset appears exactly once across batches.
        seen = []
        for b in batches:
            for row, length in zip(b.token_ids, b.lengths):
                seen.append(tuple(row[:length]))
        expected = [tuple(tokenize(s, vocab, 8)) for s in sentences]
        assert sorted(seen) == sorted(expected)

    def test_no_shuffle_preserves_order(self):
        vocab = self._vocab()
        batches = make_batches(["a", "b", "c"], vocab, 2, 8, shuffle_stream=None)
        assert batches[0].token_ids[0, 0] == vocab.id("a")

    def test_batch_size_contract(self):
        with pytest.raises(ContractError):
            make_batches(["a"], self._vocab(), 0, 8)


class TestCorpusHelpers:
    def test_load_corpus_strips_blanks(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("one sentence\n\n  \nanother one\n", encoding="utf-8")
        assert load_corpus(path) == ["one sentence", "another one"]

    def test_empty_corpus_file(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("\n\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_corpus(path)

    def test_corpus_stats(self):
        lines = ["a b c", "a b"]
        vocab = build_vocab(lines)
        stats = corpus_stats(lines, vocab)
        assert stats.n_sentences == 2 and stats.n_tokens == 5
        assert stats.vocab_size == len(vocab) and stats.max_length == 3


class TestSynth:
    def test_overlap_score_examples(self):
        assert multiset_overlap_score(["a", "b"], ["a", "b"]) == 5.0
        assert multiset_overlap_score(["a", "b"], ["c", "d"]) == 0.0
        assert multiset_overlap_score(["a", "b"], ["b", "c"]) == pytest.approx(5.0 / 3.0)

    def test_overlap_score_counts_multiplicity(self):
        # A = {x, x, y}, B = {x, y, y}: intersection 2, union 4.
        assert multiset_overlap_score(["x", "x", "y"], ["x", "y", "y"]) == pytest.approx(2.5)

    def test_corpus_generation_deterministic(self):
        a = make_synthetic_corpus(RngStream(3).fork("corpus"), 20)
        b = make_synthetic_corpus(RngStream(3).fork("corpus"), 20)
        assert a == b
        assert len(a) == 20
        assert all(5 <= len(s.split()) <= 9 for s in a)

    def test_synthetic_sts_scores_match_formula(self):
        from sampledrop.synth import make_synthetic_sts

        corpus = make_synthetic_corpus(RngStream(4).fork("corpus"), 50)
        vocab = build_vocab(corpus)
        examples = make_synthetic_sts(RngStream(4).fork("pairs"), 40, vocab)
        assert len(examples) == 40
        for ex in examples:
            expected = multiset_overlap_score(ex.sentence_a.split(), ex.sentence_b.split())
            assert ex.gold_score == expected
            assert 0.0 <= ex.gold_score <= 5.0
