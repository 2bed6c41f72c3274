"""Dataset loading, vocabulary construction, and triple building."""

import collections
import json

import numpy as np
import pytest

from tpgn.corpus import (
    Article,
    RESERVED_TOKENS,
    Vocab,
    build_triples,
    build_vocab,
    load_dataset,
    save_dataset,
)
from tpgn.errors import EmptyCorpusError, NoCommentsError, ParseError

from oracles import enumerate_triples


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def _article(id="a1", title="big news", body="the sky is blue today",
             comments=("nice sky", "blue indeed")):
    return {"id": id, "title": title, "body": body, "comments": list(comments)}


class TestLoadDataset:
    def test_single_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_jsonl(path, [_article()])
        articles = load_dataset(path)
        assert len(articles) == 1
        assert articles[0].title == ["big", "news"]
        assert articles[0].comments == [["nice", "sky"], ["blue", "indeed"]]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("")
        assert load_dataset(path) == []

    def test_missing_comments_field(self, tmp_path):
        path = tmp_path / "d.jsonl"
        row = _article()
        del row["comments"]
        _write_jsonl(path, [row])
        with pytest.raises(ParseError) as err:
            load_dataset(path)
        assert err.value.line == 1
        assert "missing field comments" in str(err.value)

    def test_bad_json_reports_line_number(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps(_article()) + "\n{broken\n")
        with pytest.raises(ParseError) as err:
            load_dataset(path)
        assert err.value.line == 2

    def test_empty_body_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_jsonl(path, [_article(body="   ")])
        with pytest.raises(ParseError):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_dataset(tmp_path / "nope.jsonl")

    def test_round_trip(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_jsonl(path, [_article(), _article(id="a2", title="更多 新闻")])
        articles = load_dataset(path)
        out = tmp_path / "copy.jsonl"
        save_dataset(articles, out)
        reloaded = load_dataset(out)
        assert reloaded == articles


class TestVocab:
    def test_reserved_ids(self):
        v = Vocab(["a", "b"])
        assert v.size == 6
        assert [v.token(i) for i in range(4)] == list(RESERVED_TOKENS)
        assert v.id("a") == 4
        assert v.id("missing") == 1  # UNK

    def test_forced_small_case(self):
        arts = [Article("x", [], ["a", "a", "b"], [])]
        v = build_vocab(arts, cap=6)
        assert set(v.token_of) == set(RESERVED_TOKENS) | {"a", "b"}

    def test_tie_break_lexicographic(self):
        arts = [Article("x", [], ["a", "b"], [])]
        v = build_vocab(arts, cap=5)
        assert v.size == 5
        assert "a" in v
        assert "b" not in v

    def test_cap_keeps_most_frequent(self):
        # 600 distinct tokens with frequency = index, checked against an
        # independent count-and-sort oracle
        rng = np.random.default_rng(0)
        body = []
        for i in range(600):
            body += [f"tok{i:03d}"] * (1 + int(rng.integers(5)))
        arts = [Article("x", [], body, [])]
        cap = 500
        v = build_vocab(arts, cap=cap)
        counter = collections.Counter(body)
        expected = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:cap - 4]
        assert set(v.token_of[4:]) == {tok for tok, _ in expected}
        assert v.size == cap

    def test_counts_cover_titles_and_comments(self):
        arts = [Article("x", ["tword"], ["bword"], [["cword"]])]
        v = build_vocab(arts, cap=10)
        assert all(t in v for t in ("tword", "bword", "cword"))

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            build_vocab([], cap=10)

    def test_save_load_round_trip(self, tmp_path):
        v = Vocab(["z", "a", "m"])
        path = tmp_path / "vocab.txt"
        v.save(path)
        loaded = Vocab.load(path)
        assert loaded.token_of == v.token_of
        # file layout: one token per line, reserved symbols first
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[:4] == list(RESERVED_TOKENS)
        assert lines[4:] == ["z", "a", "m"]


class TestBuildTriples:
    def test_single_keyword_single_match(self):
        art = Article("a", [], ["k1", "x"], [["k1", "x"], ["y"]])
        triples = build_triples(art, ["k1"], subset_size_max=2, rng_seed=0)
        assert len(triples) == 1
        assert triples[0].keywords == ["k1"]
        assert triples[0].target_comment == ["k1", "x"]
        assert triples[0].match_kind == "matched"

    def test_fallback_single_random_triple(self):
        art = Article("a", [], ["k1", "k2"], [["u"], ["v"]])
        triples = build_triples(art, ["k1", "k2"], subset_size_max=2, rng_seed=5)
        assert len(triples) == 1
        assert triples[0].match_kind == "random_fallback"
        assert triples[0].keywords == ["k1", "k2"]
        assert triples[0].target_comment in art.comments

    def test_subset_enumeration_matches_oracle(self):
        art = Article("a", [], ["k1", "k2"], [["k1", "a"], ["k1", "k2", "b"]])
        triples = build_triples(art, ["k1", "k2"], subset_size_max=2, rng_seed=0)
        expected = enumerate_triples(["k1", "k2"], art.comments, 2)
        assert len(triples) == 4
        got = [(tuple(t.keywords), tuple(t.target_comment)) for t in triples]
        assert got == expected

    def test_deterministic_given_seed(self):
        art = Article("a", [], ["k"], [["u"], ["v"], ["w"]])
        first = build_triples(art, ["k"], rng_seed=71)
        second = build_triples(art, ["k"], rng_seed=71)
        assert first == second

    def test_target_comment_is_verbatim(self):
        art = Article("a", [], ["k1", "x"], [["k1"], ["x", "k1"]])
        for t in build_triples(art, ["k1", "x"], subset_size_max=2, rng_seed=0):
            assert t.target_comment in art.comments
            if t.match_kind == "matched":
                assert all(kw in t.target_comment for kw in t.keywords)

    def test_cap_keeps_smallest_subsets(self):
        comments = [[f"k{i}"] for i in range(6)]
        art = Article("a", [], [f"k{i}" for i in range(6)], comments)
        keywords = [f"k{i}" for i in range(6)]
        triples = build_triples(art, keywords, subset_size_max=3, rng_seed=0,
                                max_triples=4)
        assert len(triples) == 4
        assert all(len(t.keywords) == 1 for t in triples)

    def test_no_comments(self):
        art = Article("a", [], ["x"], [])
        with pytest.raises(NoCommentsError):
            build_triples(art, ["x"])

    def test_article_tokens_are_title_plus_body(self):
        art = Article("a", ["t1"], ["b1", "k"], [["k"]])
        triples = build_triples(art, ["k"], rng_seed=0)
        assert triples[0].article_tokens == ["t1", "b1", "k"]


class TestDatasetFormat:
    def test_unsupported_format_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("")
        with pytest.raises(ValueError):
            load_dataset(path, format="csv")
