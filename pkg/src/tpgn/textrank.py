"""Graph-based keyword extraction over word co-occurrence graphs.

Words become nodes, co-occurrences within a sliding window become weighted
undirected edges, and node scores follow the damped weighted ranking
recurrence S(v) = (1 - d) + d * sum_u w(u,v) / deg(u) * S(u), iterated to a
fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError

DEFAULT_WINDOW = 5
DEFAULT_DAMPING = 0.85
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100

# sentence-final delimiter tokens (fullwidth and ASCII)
DEFAULT_SENTENCE_DELIMITERS = frozenset({"。", "！", "？", ".", "!", "?"})


@dataclass
class WordGraph:
    nodes: list[str]
    adjacency: np.ndarray  # symmetric co-occurrence counts, zero diagonal

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass
class RankResult:
    scores: dict[str, float]
    converged: bool
    iterations: int


def build_graph(tokens: list[str], window: int = DEFAULT_WINDOW) -> WordGraph:
    """Count co-occurrences of distinct tokens within `window` positions."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if not tokens:
        raise EmptyInputError("no tokens")
    nodes: list[str] = []
    index: dict[str, int] = {}
    for tok in tokens:
        if tok not in index:
            index[tok] = len(nodes)
            nodes.append(tok)
    adj = np.zeros((len(nodes), len(nodes)))
    for i, tok in enumerate(tokens):
        a = index[tok]
        for j in range(i + 1, min(i + window, len(tokens))):
            b = index[tokens[j]]
            if a != b:
                adj[a, b] += 1.0
                adj[b, a] += 1.0
    return WordGraph(nodes=nodes, adjacency=adj)


def rank(graph: WordGraph, damping: float = DEFAULT_DAMPING, tol: float = DEFAULT_TOL,
         max_iter: int = DEFAULT_MAX_ITER) -> RankResult:
    """Iterate the weighted ranking recurrence to within `tol` in max-norm.

    When max_iter is exhausted the last iterate is returned with
    ``converged=False`` instead of raising.
    """
    if graph.size == 0:
        raise EmptyInputError("empty graph")
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    weights = graph.adjacency
    degree = weights.sum(axis=1)
    # rows of `transition`: P[u, v] = w(u,v) / deg(u); dangling rows stay zero
    safe_degree = np.where(degree > 0.0, degree, 1.0)
    transition = weights / safe_degree[:, None]
    scores = np.ones(graph.size)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        updated = (1.0 - damping) + damping * (transition.T @ scores)
        delta = float(np.max(np.abs(updated - scores)))
        scores = updated
        if delta < tol:
            converged = True
            break
    return RankResult(
        scores={tok: float(scores[i]) for i, tok in enumerate(graph.nodes)},
        converged=converged,
        iterations=iterations,
    )


def extract_keywords(tokens: list[str], k: int, window: int = DEFAULT_WINDOW,
                     damping: float = DEFAULT_DAMPING, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> list[str]:
    """Top-k tokens by rank score; score ties break lexicographically."""
    if k < 1:
        raise ValueError("k must be >= 1")
    result = rank(build_graph(tokens, window), damping, tol, max_iter)
    ordered = sorted(result.scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [tok for tok, _ in ordered[:k]]


def split_sentences(tokens: list[str],
                    delimiters=DEFAULT_SENTENCE_DELIMITERS) -> list[list[str]]:
    """Split a token stream on delimiter tokens; the delimiters are dropped."""
    sentences: list[list[str]] = []
    current: list[str] = []
    for tok in tokens:
        if tok in delimiters:
            if current:
                sentences.append(current)
                current = []
        else:
            current.append(tok)
    if current:
        sentences.append(current)
    return sentences


def extract_sentence_keywords(article, k_per_sentence: int,
                              window: int = DEFAULT_WINDOW,
                              delimiters=DEFAULT_SENTENCE_DELIMITERS) -> list[list[str]]:
    """One keyword list per sentence of the article, each from its own graph."""
    return [extract_keywords(sent, k_per_sentence, window)
            for sent in split_sentences(article.tokens, delimiters)]
