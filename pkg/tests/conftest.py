"""Shared fixtures: tiny models and the synthetic memorization corpus."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `oracles`

from tpgn.corpus import Article, Vocab, build_triples, build_vocab
from tpgn.model import TpgnConfig, TpgnModel
from tpgn import lda, textrank

THEMES = ("weather", "sport", "food", "music")


def make_overfit_articles(n_per_theme: int = 5) -> list[Article]:
    """Synthetic articles built so that keyword subsets map 1:1 to comments.

    Each article has 3 sentences; sentence j repeats a per-article anchor
    token three times, so both whole-article and per-sentence keyword
    extraction surface the anchors, and comment j contains exactly anchor j.
    """
    articles = []
    for g, theme in enumerate(THEMES):
        fillers = [f"{theme}f{j}" for j in range(6)]
        for i in range(n_per_theme):
            idx = g * n_per_theme + i
            anchors = [f"{theme}a{idx}s{j}" for j in range(3)]
            body = []
            for j, anchor in enumerate(anchors):
                body += [anchor, fillers[2 * j], anchor, fillers[2 * j + 1], anchor, "."]
            comments = [[f"praise{theme}", anchor, f"tail{j}"]
                        for j, anchor in enumerate(anchors)]
            articles.append(Article(
                id=f"{theme}{idx}",
                title=[theme, f"story{idx}"],
                body=body,
                comments=comments,
            ))
    return articles


def make_overfit_setup(n_per_theme: int = 5, seed: int = 17):
    """Articles, vocab, topic model, and training triples for memorization runs."""
    articles = make_overfit_articles(n_per_theme)
    vocab = build_vocab(articles, cap=400)
    topic_model = lda.gibbs_train([a.tokens for a in articles], n_topics=4,
                                  iters=60, seed=seed, top_n=30)
    triples = []
    for index, article in enumerate(articles):
        keywords = textrank.extract_keywords(article.tokens, k=5)
        triples.extend(build_triples(article, keywords, subset_size_max=2,
                                     rng_seed=seed + index))
    return articles, vocab, topic_model, triples


@pytest.fixture(scope="session")
def overfit_setup():
    return make_overfit_setup()


@pytest.fixture
def tiny_vocab():
    return Vocab([f"w{i}" for i in range(16)])  # size 20 with reserved ids


@pytest.fixture
def tiny_model(tiny_vocab):
    cfg = TpgnConfig(embed_dim=6, hidden_dim=8, n_topics=4, init_seed=3)
    return TpgnModel(cfg, tiny_vocab)


@pytest.fixture
def uniform_prior():
    return np.full(4, 0.25)
