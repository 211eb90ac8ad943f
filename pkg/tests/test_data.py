"""Ingestion formats, batching, splits, synthetic corpora."""

import numpy as np
import pytest

from adaslstm import data
from adaslstm.embedding import PAD_ID, Vocab
from adaslstm.errors import DataFormatError


class TestTokenize:
    def test_whitespace_and_punctuation(self):
        assert data.tokenize("great film, truly!") == ["great", "film", ",", "truly", "!"]

    def test_case_preserved(self):
        assert data.tokenize("What is NASA") == ["What", "is", "NASA"]


class TestIngest:
    def test_tsv(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("pos\tgreat film\nneg\tdull, slow\n")
        ds = data.ingest(str(p), "tsv")
        assert len(ds) == 2
        assert ds.records[0].label == "pos"
        assert ds.records[0].tokens == ["great", "film"]
        assert ds.labels == ["neg", "pos"]

    def test_tsv_malformed_row_names_line(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("pos\tok\nno-tab-here\n")
        with pytest.raises(DataFormatError, match=r"d\.tsv:2"):
            data.ingest(str(p), "tsv")

    def test_csv(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text('pos,"great, truly"\nneg,meh\n')
        ds = data.ingest(str(p), "csv")
        assert ds.records[0].tokens == ["great", ",", "truly"]

    def test_jsonl(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"label": "a", "text": "one two"}\n{"label": "b", "text": "three"}\n')
        ds = data.ingest(str(p), "jsonl")
        assert [r.label for r in ds.records] == ["a", "b"]

    def test_jsonl_missing_text_names_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"label": "a", "text": "ok"}\n{"label": "b"}\n')
        with pytest.raises(DataFormatError, match=r"d\.jsonl:2"):
            data.ingest(str(p), "jsonl")

    def test_empty_text_rejected(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("pos\t   \n")
        with pytest.raises(DataFormatError, match=":1"):
            data.ingest(str(p), "tsv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DataFormatError, match="xml"):
            data.ingest("whatever", "xml")

    def test_idempotent(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\tx y\nb\tz\n")
        d1 = data.ingest(str(p), "tsv")
        d2 = data.ingest(str(p), "tsv")
        assert [(r.label, r.tokens) for r in d1.records] == \
               [(r.label, r.tokens) for r in d2.records]

    def test_write_read_round_trip(self, tmp_path):
        ds = data.make_memorization_corpus(seed=3, n=10)
        p = tmp_path / "m.tsv"
        data.write_tsv(ds, str(p))
        back = data.ingest(str(p), "tsv")
        assert [(r.label, r.tokens) for r in back.records] == \
               [(r.label, r.tokens) for r in ds.records]


def tiny_dataset():
    rows = [("a", "one two three"), ("b", "four"), ("a", "five six seven eight"),
            ("b", "nine ten"), ("a", "one four nine")]
    return data.TextDataset([data.DatasetRecord(l, t, data.tokenize(t))
                             for l, t in rows])


class TestBatching:
    def test_padding_and_lengths(self):
        ds = tiny_dataset()
        vocab = Vocab.from_corpus(ds.sentences())
        batches = data.make_batches(ds, vocab, 3, max_word_len=8)
        assert len(batches) == 2
        b = batches[0]
        assert b.word_ids.shape == (3, 4)
        np.testing.assert_array_equal(b.lengths, [3, 1, 4])
        assert (b.word_ids[1, 1:] == PAD_ID).all()
        assert b.mask.sum() == 8

    def test_char_dims_cover_longest_word(self):
        ds = tiny_dataset()
        vocab = Vocab.from_corpus(ds.sentences())
        b = data.make_batches(ds, vocab, 5, max_word_len=16)[0]
        assert b.char_ids.shape[2] == 5  # "seven" and "eight"
        assert b.char_lens.max() == 5

    def test_char_width_floor_is_window_size(self):
        ds = data.TextDataset([data.DatasetRecord("a", "x y", ["x", "y"])])
        vocab = Vocab.from_corpus(ds.sentences())
        b = data.make_batches(ds, vocab, 1, max_word_len=16)[0]
        assert b.char_ids.shape[2] == 3

    def test_shuffle_is_seeded(self):
        ds = tiny_dataset()
        vocab = Vocab.from_corpus(ds.sentences())
        b1 = data.make_batches(ds, vocab, 2, 8, rng=np.random.default_rng(4))
        b2 = data.make_batches(ds, vocab, 2, 8, rng=np.random.default_rng(4))
        for x, y in zip(b1, b2):
            np.testing.assert_array_equal(x.word_ids, y.word_ids)

    def test_max_len_truncates(self):
        ds = tiny_dataset()
        vocab = Vocab.from_corpus(ds.sentences())
        b = data.make_batches(ds, vocab, 5, 8, max_len=2)[0]
        assert b.max_len == 2
        assert b.lengths.max() == 2

    def test_labels_follow_dataset_inventory(self):
        ds = tiny_dataset()
        vocab = Vocab.from_corpus(ds.sentences())
        b = data.make_batches(ds, vocab, 5, 8)[0]
        np.testing.assert_array_equal(b.labels, [0, 1, 0, 1, 0])


class TestSplits:
    def test_split_partitions(self):
        ds = data.make_memorization_corpus(seed=1, n=30)
        rest, held = data.split_dataset(ds, 0.2, np.random.default_rng(0))
        assert len(rest) == 24 and len(held) == 6
        texts = {r.text for r in ds.records}
        assert {r.text for r in rest.records} | {r.text for r in held.records} == texts

    def test_split_rejects_everything_held(self):
        ds = data.make_memorization_corpus(seed=1, n=5)
        with pytest.raises(ValueError):
            data.split_dataset(ds, 0.99, np.random.default_rng(0))

    def test_folds_partition_exactly(self):
        folds = data.fold_indices(23, 5, np.random.default_rng(7))
        sizes = [len(f) for f in folds]
        assert sum(sizes) == 23
        assert max(sizes) - min(sizes) <= 1
        assert sorted(np.concatenate(folds).tolist()) == list(range(23))

    def test_folds_reject_small_dataset(self):
        with pytest.raises(ValueError):
            data.fold_indices(3, 5, np.random.default_rng(0))


class TestSyntheticCorpora:
    def test_trigger_label_matches_token_presence(self):
        train, test = data.make_trigger_corpus(seed=5)
        for ds in (train, test):
            for r in ds.records:
                assert (r.label == "hit") == ("quixolvent" in r.tokens)

    def test_trigger_balanced(self):
        train, _ = data.make_trigger_corpus(seed=5, n_train=100)
        hits = sum(r.label == "hit" for r in train.records)
        assert hits == 50

    def test_question_corpus_shape(self):
        train, test = data.make_question_corpus(seed=5, n_train=600, n_test=120)
        assert len(train) == 600 and len(test) == 120
        assert len(train.labels) == 6
        lens = [len(r.tokens) for r in train.records]
        assert 8 <= np.mean(lens) <= 16

    def test_question_order_markers(self):
        """Order-cued records put the class-4 marker first for class 4 only."""
        train, _ = data.make_question_corpus(seed=5, n_train=1200, n_test=6)
        seen = 0
        for r in train.records:
            if "krazelund" in r.tokens and "vortishal" in r.tokens:
                seen += 1
                a, b = r.tokens.index("krazelund"), r.tokens.index("vortishal")
                assert abs(a - b) >= 7
                assert r.label == (train.labels[4] if a < b else train.labels[5])
        assert seen > 10

    def test_generators_deterministic(self):
        a1, _ = data.make_trigger_corpus(seed=9)
        a2, _ = data.make_trigger_corpus(seed=9)
        assert [r.text for r in a1.records] == [r.text for r in a2.records]
