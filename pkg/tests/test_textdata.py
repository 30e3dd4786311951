import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from styleobf import textdata as td
from styleobf.textdata import VerseRecord


def test_tokenize_detaches_punctuation():
    assert td.tokenize("For the strong town is without men,") == \
        ["For", "the", "strong", "town", "is", "without", "men", ","]
    assert td.tokenize("(yea, Lord!)") == ["(", "yea", ",", "Lord", "!", ")"]
    assert td.tokenize("   ") == []


def test_detokenize_round_trip_on_spaced_text():
    text = "And God said, Let there be light: and there was light."
    assert td.detokenize(td.tokenize(text)) == text


def test_vocab_layout_and_order():
    recs = [VerseRecord("k1", "A", ("b", "a", "b")), VerseRecord("k1", "B", ("c", "a", "b"))]
    v = td.build_vocab(recs)
    assert v.itos[:6] == [td.PAD, td.UNK, td.BOS, td.EOS, "<2A>", "<2B>"]
    assert v.itos[6:] == ["b", "a", "c"]       # frequency then alphabetical
    assert v.encode(["a", "zzz"]) == [v.stoi["a"], td.UNK_ID]
    assert v.style_token_id("B") == 5
    assert v.num_reserved == 6


def test_vocab_min_count_and_empty_corpus(caplog):
    recs = [VerseRecord("k", "A", ("x", "x", "y"))]
    assert "y" not in td.build_vocab(recs, min_count=2)
    with caplog.at_level("WARNING"):
        v = td.build_vocab([])
    assert len(v) == 4 and "empty corpus" in caplog.text
    with pytest.raises(ValueError):
        td.build_vocab(recs, min_count=0)


def test_vocab_decode_strips_framing():
    v = td.build_vocab([VerseRecord("k", "A", ("x", "y"))])
    ids = [td.BOS_ID, v.stoi["x"], td.PAD_ID, v.stoi["y"], td.EOS_ID, v.stoi["x"]]
    assert v.decode(ids) == ["x", "y"]
    assert len(v.decode(ids, strip=False)) == 6


def test_vocab_save_load(tmp_path):
    v = td.build_vocab([VerseRecord("k", "KJV", ("x", "y")), VerseRecord("k", "BBE", ("z",))])
    v.save(tmp_path / "v.txt")
    w = td.Vocab.load(tmp_path / "v.txt")
    assert w.itos == v.itos and w.styles == v.styles


def test_vocab_rejects_bad_layout():
    with pytest.raises(ValueError):
        td.Vocab(["a", "b"], [])
    with pytest.raises(ValueError):
        td.Vocab(list(td.RESERVED) + ["x"], ["A"])


def test_read_corpus_reports_line_numbers(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("k1\tA\tIn the beginning.\nk1\tB\tbroken line\n", encoding="utf-8")
    p.write_text("k1\tA\tIn the beginning.\nk1\tB\n", encoding="utf-8")
    with pytest.raises(td.IngestionError, match=":2:"):
        td.read_corpus(p)
    p.write_text("k1\tA\t  \n", encoding="utf-8")
    with pytest.raises(td.IngestionError, match=":1:"):
        td.read_corpus(p)


def test_corpus_round_trip(tmp_path):
    recs = [VerseRecord("Gen 1:1", "A", ("In", "the", "beginning", ".")),
            VerseRecord("Gen 1:1", "B", ("At", "first", "."))]
    td.write_corpus(tmp_path / "c.tsv", recs)
    assert td.read_corpus(tmp_path / "c.tsv", pretokenized=True) == recs


def test_verse_record_validation():
    with pytest.raises(td.IngestionError):
        VerseRecord("k", "A", ())
    with pytest.raises(td.IngestionError):
        VerseRecord("", "A", ("x",))


def five_style_group(key="k"):
    return [VerseRecord(key, s, (s.lower(), "w")) for s in ["BBE", "KJV", "YLT", "DBY", "ASV"]]


def test_five_style_group_gives_twenty_ordered_pairs():
    pairs = td.make_pairs(five_style_group())
    assert len(pairs) == 20
    assert len({(p.source_style, p.target_style) for p in pairs}) == 20
    assert all(p.source_style != p.target_style for p in pairs)


def test_incomplete_group_and_duplicates():
    recs = five_style_group()[:3]
    assert len(td.make_pairs(recs)) == 6
    with pytest.raises(td.IngestionError):
        td.group_by_key(recs + [VerseRecord("k", "BBE", ("again",))])


def test_ae_examples_map_records_to_themselves():
    ex = td.make_ae_examples(five_style_group())
    assert all(e.source == e.target and e.source_style == e.target_style for e in ex)


def test_split_keys_counts_and_determinism():
    keys = [f"k{i}" for i in range(10)]
    a = td.split_keys(keys, (0.8, 0.1, 0.1), seed=3)
    assert [len(a[p]) for p in ("train", "dev", "test")] == [8, 1, 1]
    assert a == td.split_keys(reversed(keys), (0.8, 0.1, 0.1), seed=3)
    small = td.split_keys(["a", "b", "c"], (0.8, 0.1, 0.1))
    assert all(len(v) == 1 for v in small.values())
    with pytest.raises(ValueError):
        td.split_keys(["a", "b"])
    with pytest.raises(ValueError):
        td.split_keys(keys, (0.5, 0.5, 0.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 10_000))
def test_split_is_key_disjoint_and_complete(n_keys, seed):
    recs = [r for k in range(n_keys) for r in five_style_group(f"v{k}")[:2]]
    pairs = td.make_pairs(recs)
    ds = td.split(pairs, seed=seed)
    td.check_disjoint(ds)
    assert len(ds.train) + len(ds.dev) + len(ds.test) == len(pairs)
    assert min(len(ds.train), len(ds.dev), len(ds.test)) > 0


def test_check_disjoint_detects_leak():
    e = td.PairExample("k", ("x",), ("y",), "A", "B")
    with pytest.raises(AssertionError):
        td.check_disjoint(td.DataSplit([e], [e], []))
