"""Latent Dirichlet allocation via collapsed Gibbs sampling.

The sampler keeps integer count matrices only; a word's topic embedding is
its normalized topic-assignment count vector, and per-article topic words
are the article tokens that land in the top list of the article's dominant
inferred topic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCorpusError, ParseError, UnknownWordError

MODEL_MAGIC = b"TPGNLDA1"

# validate the sampling distribution at every step (slow; enabled in tests)
DEBUG_VALIDATE = False


@dataclass
class TopicEmbedding:
    word: str
    dist: np.ndarray  # length-T probability vector


@dataclass
class TopicModel:
    n_topics: int
    vocab: list[str]  # index -> word
    word_topic_counts: np.ndarray  # (V, T) int64
    alpha: float
    beta: float
    top_n: int = 50
    word_index: dict[str, int] = field(init=False, repr=False)
    _top_words: list[list[str]] | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.word_index = {w: i for i, w in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def topic_top_words(self) -> list[list[str]]:
        if self._top_words is None:
            self._top_words = topic_words(self, self.top_n)
        return self._top_words


def default_alpha(n_topics: int) -> float:
    return 50.0 / n_topics


DEFAULT_BETA = 0.01


def gibbs_train(docs: list[list[str]], n_topics: int, alpha: float | None = None,
                beta: float = DEFAULT_BETA, iters: int = 100, seed: int = 0,
                top_n: int = 50, log_every: int = 0, log_fn=None) -> TopicModel:
    """Run collapsed Gibbs sweeps and return counts from the final sweep.

    Each token's topic is resampled from
    p(z) ~ (n_dz + alpha) * (n_zw + beta) / (n_z + V*beta), with the token's
    own assignment excluded from all counts. Deterministic for a fixed seed.
    """
    if n_topics < 2:
        raise ValueError("n_topics must be >= 2")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    docs = [d for d in docs if d]
    if not docs:
        raise EmptyCorpusError("no documents")
    if alpha is None:
        alpha = default_alpha(n_topics)

    vocab: list[str] = []
    index: dict[str, int] = {}
    for doc in docs:
        for tok in doc:
            if tok not in index:
                index[tok] = len(vocab)
                vocab.append(tok)
    n_words = len(vocab)
    doc_ids = [np.array([index[t] for t in doc], dtype=np.intp) for doc in docs]

    rng = np.random.default_rng(seed)
    n_dz = np.zeros((len(docs), n_topics))
    n_wz = np.zeros((n_words, n_topics))
    n_z = np.zeros(n_topics)
    assignments = []
    for d, ids in enumerate(doc_ids):
        z = rng.integers(n_topics, size=len(ids))
        assignments.append(z)
        for w, k in zip(ids, z):
            n_dz[d, k] += 1
            n_wz[w, k] += 1
            n_z[k] += 1

    beta_sum = n_words * beta
    for sweep in range(1, iters + 1):
        track = log_every and (sweep % log_every == 0 or sweep == iters)
        log_total = 0.0
        token_count = 0
        for d, ids in enumerate(doc_ids):
            z = assignments[d]
            row_d = n_dz[d]
            for n, w in enumerate(ids):
                k = z[n]
                row_d[k] -= 1
                n_wz[w, k] -= 1
                n_z[k] -= 1
                probs = (row_d + alpha) * (n_wz[w] + beta) / (n_z + beta_sum)
                total = probs.sum()
                if DEBUG_VALIDATE:
                    normalized = probs / total
                    assert np.all(normalized >= 0.0)
                    assert abs(float(normalized.sum()) - 1.0) < 1e-9
                cum = np.cumsum(probs)
                k = int(np.searchsorted(cum, rng.random() * total, side="right"))
                k = min(k, n_topics - 1)
                z[n] = k
                row_d[k] += 1
                n_wz[w, k] += 1
                n_z[k] += 1
                if track:
                    log_total += float(np.log(probs[k] / total))
                    token_count += 1
        if track and log_fn is not None:
            log_fn(sweep, log_total / token_count)

    return TopicModel(
        n_topics=n_topics,
        vocab=vocab,
        word_topic_counts=n_wz.astype(np.int64),
        alpha=float(alpha),
        beta=float(beta),
        top_n=top_n,
    )


def topic_words(model: TopicModel, n: int) -> list[list[str]]:
    """Per topic, the n words with the highest counts (ties lexicographic)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    counts = model.word_topic_counts
    for z in range(model.n_topics):
        order = sorted(range(model.vocab_size),
                       key=lambda w: (-counts[w, z], model.vocab[w]))
        out.append([model.vocab[w] for w in order[:n]])
    return out


def topic_embedding(model: TopicModel, word: str) -> TopicEmbedding:
    """Normalized topic-assignment counts of a word: p(z|w) = C_wz / sum_z' C_wz'."""
    if word not in model.word_index:
        raise UnknownWordError(word)
    counts = model.word_topic_counts[model.word_index[word]].astype(np.float64)
    total = counts.sum()
    if total == 0.0:
        # never assigned (cannot happen after training, but keep it total)
        return TopicEmbedding(word, np.full(model.n_topics, 1.0 / model.n_topics))
    return TopicEmbedding(word, counts / total)


def infer_topic_proportions(model: TopicModel, tokens: list[str],
                            infer_iters: int = 20, seed: int = 0) -> np.ndarray:
    """Fold a new document in against frozen word-topic counts.

    Only the document's own topic counts are resampled; returns the smoothed
    topic-proportion vector. Tokens outside the model vocabulary are ignored;
    with no known tokens the result is uniform.
    """
    ids = np.array([model.word_index[t] for t in tokens if t in model.word_index],
                   dtype=np.intp)
    n_topics = model.n_topics
    if len(ids) == 0:
        return np.full(n_topics, 1.0 / n_topics)
    rng = np.random.default_rng(seed)
    word_term = (model.word_topic_counts + model.beta) / (
        model.word_topic_counts.sum(axis=0) + model.vocab_size * model.beta)
    z = rng.integers(n_topics, size=len(ids))
    doc_counts = np.zeros(n_topics)
    for k in z:
        doc_counts[k] += 1
    for _ in range(infer_iters):
        for n, w in enumerate(ids):
            doc_counts[z[n]] -= 1
            probs = (doc_counts + model.alpha) * word_term[w]
            cum = np.cumsum(probs)
            k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            k = min(k, n_topics - 1)
            z[n] = k
            doc_counts[k] += 1
    proportions = (doc_counts + model.alpha)
    return proportions / proportions.sum()


def article_topic_words(model: TopicModel, article_tokens: list[str],
                        infer_iters: int = 20, seed: int = 0):
    """Topic words and topic prior for one article.

    The article's dominant inferred topic is intersected with that topic's
    top-word list; an empty intersection falls back to (no topic words,
    uniform prior).
    """
    proportions = infer_topic_proportions(model, article_tokens, infer_iters, seed)
    dominant = int(np.argmax(proportions))
    article_set = set(article_tokens)
    words = [w for w in model.topic_top_words[dominant] if w in article_set]
    if not words:
        return [], np.full(model.n_topics, 1.0 / model.n_topics)
    return words, proportions


def save_topic_model(model: TopicModel, path) -> None:
    """Persist as: magic, T, V, alpha, beta, vocabulary, row-major int64 counts."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<q", model.n_topics))
        fh.write(struct.pack("<q", model.vocab_size))
        fh.write(struct.pack("<d", model.alpha))
        fh.write(struct.pack("<d", model.beta))
        for word in model.vocab:
            encoded = word.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
        fh.write(np.ascontiguousarray(model.word_topic_counts, dtype="<i8").tobytes())


def load_topic_model(path, top_n: int = 50) -> TopicModel:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MODEL_MAGIC:
            raise ParseError(1, f"not a topic model file: bad magic {magic!r}")
        n_topics, = struct.unpack("<q", fh.read(8))
        n_words, = struct.unpack("<q", fh.read(8))
        alpha, = struct.unpack("<d", fh.read(8))
        beta, = struct.unpack("<d", fh.read(8))
        vocab = []
        for _ in range(n_words):
            nlen, = struct.unpack("<I", fh.read(4))
            vocab.append(fh.read(nlen).decode("utf-8"))
        counts = np.frombuffer(fh.read(8 * n_words * n_topics), dtype="<i8")
        counts = counts.reshape(n_words, n_topics).astype(np.int64)
    return TopicModel(n_topics=n_topics, vocab=vocab, word_topic_counts=counts,
                      alpha=alpha, beta=beta, top_n=top_n)
