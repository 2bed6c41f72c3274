"""Dataset ingestion, vocabularies, and training-triple construction.

Input corpora are JSONL files, one article object per line with fields
``id``, ``title``, ``body`` and ``comments``; all text is whitespace
tokenized. A training triple pairs the article with one keyword subset and
one comment that contains every keyword of the subset; articles where no
subset matches any comment fall back to a single randomly chosen comment.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCorpusError, NoCommentsError, ParseError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
START_TOKEN = "<s>"
STOP_TOKEN = "</s>"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, START_TOKEN, STOP_TOKEN)
PAD_ID, UNK_ID, START_ID, STOP_ID = 0, 1, 2, 3


@dataclass
class Article:
    id: str
    title: list[str]
    body: list[str]
    comments: list[list[str]]

    @property
    def tokens(self) -> list[str]:
        """Model-side token stream: title followed by body."""
        return self.title + self.body


@dataclass
class TrainingTriple:
    article_id: str
    article_tokens: list[str]
    keywords: list[str]
    target_comment: list[str]
    match_kind: str  # "matched" | "random_fallback"


class Vocab:
    """Fixed token vocabulary with four reserved ids (pad/unk/start/stop)."""

    def __init__(self, tokens: list[str]):
        self.token_of = list(RESERVED_TOKENS) + list(tokens)
        self.id_of = {tok: i for i, tok in enumerate(self.token_of)}
        if len(self.id_of) != len(self.token_of):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.token_of)

    def id(self, token: str) -> int:
        return self.id_of.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        return self.token_of[token_id]

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.token_of:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
        if tuple(lines[:4]) != RESERVED_TOKENS:
            raise ParseError(1, "vocab file must start with the reserved symbols")
        return cls(lines[4:])


def _tokenize(text, line_no: int, name: str) -> list[str]:
    if not isinstance(text, str):
        raise ParseError(line_no, f"field {name} must be a string")
    return text.split()


def load_dataset(path, format: str = "jsonl") -> list[Article]:
    """Read a JSONL corpus; malformed lines raise ParseError with the line number."""
    if format != "jsonl":
        raise ValueError(f"unsupported dataset format {format!r}")
    articles = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(line_no, f"invalid JSON: {err.msg}") from err
            if not isinstance(obj, dict):
                raise ParseError(line_no, "line is not a JSON object")
            for key in ("id", "title", "body", "comments"):
                if key not in obj:
                    raise ParseError(line_no, f"missing field {key}")
            if not isinstance(obj["comments"], list):
                raise ParseError(line_no, "field comments must be an array")
            body = _tokenize(obj["body"], line_no, "body")
            if not body:
                raise ParseError(line_no, "empty body")
            comments = []
            for c in obj["comments"]:
                toks = _tokenize(c, line_no, "comments")
                if not toks:
                    raise ParseError(line_no, "empty comment")
                comments.append(toks)
            articles.append(Article(
                id=str(obj["id"]),
                title=_tokenize(obj["title"], line_no, "title"),
                body=body,
                comments=comments,
            ))
    return articles


def save_dataset(articles: list[Article], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for art in articles:
            fh.write(json.dumps({
                "id": art.id,
                "title": " ".join(art.title),
                "body": " ".join(art.body),
                "comments": [" ".join(c) for c in art.comments],
            }, ensure_ascii=False) + "\n")


def build_vocab(articles: list[Article], cap: int) -> Vocab:
    """Keep the (cap - 4) most frequent tokens; frequency ties break lexicographically."""
    if cap < 5:
        raise ValueError("vocab cap must be at least 5")
    counts: dict[str, int] = {}
    for art in articles:
        for tok in itertools.chain(art.title, art.body, *art.comments):
            if tok in RESERVED_TOKENS:
                continue
            counts[tok] = counts.get(tok, 0) + 1
    if not counts:
        raise EmptyCorpusError("no tokens in corpus")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab([tok for tok, _ in ordered[:cap - 4]])


def build_triples(article: Article, keywords: list[str], subset_size_max: int = 2,
                  rng_seed: int = 0, max_triples: int = 32) -> list[TrainingTriple]:
    """Pair keyword subsets with the comments that contain all their tokens.

    Subsets are enumerated smallest-first and the result is capped at
    ``max_triples``. When no subset matches any comment, a single fallback
    triple is emitted with the full keyword list and a seeded random comment.
    """
    if subset_size_max < 1:
        raise ValueError("subset_size_max must be >= 1")
    if not article.comments:
        raise NoCommentsError(f"article {article.id} has no comments")
    comment_sets = [set(c) for c in article.comments]
    triples: list[TrainingTriple] = []
    tokens = article.tokens
    for size in range(1, subset_size_max + 1):
        for subset in itertools.combinations(keywords, size):
            needed = set(subset)
            for comment, cset in zip(article.comments, comment_sets):
                if needed <= cset:
                    triples.append(TrainingTriple(
                        article_id=article.id,
                        article_tokens=tokens,
                        keywords=list(subset),
                        target_comment=comment,
                        match_kind="matched",
                    ))
                    if len(triples) >= max_triples:
                        return triples
    if triples:
        return triples
    rng = np.random.default_rng(rng_seed)
    chosen = int(rng.integers(len(article.comments)))
    return [TrainingTriple(
        article_id=article.id,
        article_tokens=tokens,
        keywords=list(keywords),
        target_comment=article.comments[chosen],
        match_kind="random_fallback",
    )]


def save_triples(triples: list[TrainingTriple], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(json.dumps({
                "article_id": t.article_id,
                "article_tokens": t.article_tokens,
                "keywords": t.keywords,
                "target_comment": t.target_comment,
                "match_kind": t.match_kind,
            }, ensure_ascii=False) + "\n")


def load_triples(path) -> list[TrainingTriple]:
    triples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(line_no, f"invalid JSON: {err.msg}") from err
            try:
                triples.append(TrainingTriple(
                    article_id=str(obj["article_id"]),
                    article_tokens=list(obj["article_tokens"]),
                    keywords=list(obj["keywords"]),
                    target_comment=list(obj["target_comment"]),
                    match_kind=str(obj["match_kind"]),
                ))
            except KeyError as err:
                raise ParseError(line_no, f"missing field {err.args[0]}") from err
    return triples
