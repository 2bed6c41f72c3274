"""Caption-style generation metrics and the top-N multi-candidate protocol.

Conventions follow the widely used caption-evaluation reference code:
ROUGE-L is an LCS F-measure with beta = 1.2 taking the max over references;
BLEU-1 is clipped unigram precision with the closest-reference-length
brevity penalty; CIDEr-D is a TF-IDF n-gram cosine (n = 1..4) with a
length-difference gaussian penalty (sigma = 6), count clipping, and a x10
scale, with document frequencies taken over the reference corpus.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import CorpusTooSmallError, EmptyInputError

ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4


def _lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length, O(len(a) * len(b))."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0] * (len(b) + 1)
        for j, tok_b in enumerate(b, start=1):
            if tok_a == tok_b:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _clean_refs(candidate, references):
    if not candidate:
        raise EmptyInputError("empty candidate")
    refs = [r for r in references if r]
    if not refs:
        raise EmptyInputError("no non-empty references")
    return refs


def rouge_l(candidate: list[str], references: list[list[str]]) -> float:
    """LCS-based F-measure in [0, 1], max over references."""
    refs = _clean_refs(candidate, references)
    best = 0.0
    beta_sq = ROUGE_BETA * ROUGE_BETA
    for ref in refs:
        lcs = _lcs_length(candidate, ref)
        if lcs == 0:
            continue
        recall = lcs / len(ref)
        precision = lcs / len(candidate)
        score = ((1.0 + beta_sq) * recall * precision) / (recall + beta_sq * precision)
        best = max(best, score)
    return best


def _closest_ref_len(cand_len: int, ref_lens: list[int]) -> int:
    return min((abs(rl - cand_len), rl) for rl in ref_lens)[1]


def bleu_1(candidate: list[str], references: list[list[str]]) -> float:
    """Clipped unigram precision times the closest-length brevity penalty."""
    refs = _clean_refs(candidate, references)
    counts = Counter(candidate)
    max_ref = Counter()
    for ref in refs:
        for tok, cnt in Counter(ref).items():
            max_ref[tok] = max(max_ref[tok], cnt)
    clipped = sum(min(cnt, max_ref[tok]) for tok, cnt in counts.items())
    precision = clipped / len(candidate)
    ref_len = _closest_ref_len(len(candidate), [len(r) for r in refs])
    if len(candidate) < ref_len:
        precision *= math.exp(1.0 - ref_len / len(candidate))
    return precision


def bleu_1_corpus(pairs: list[tuple[list[str], list[list[str]]]]) -> float:
    """Corpus-level BLEU-1: sum of clipped counts over sum of candidate lengths.

    The brevity penalty uses the summed closest reference lengths.
    """
    total_clipped = 0
    total_cand = 0
    total_ref = 0
    for candidate, references in pairs:
        refs = _clean_refs(candidate, references)
        counts = Counter(candidate)
        max_ref = Counter()
        for ref in refs:
            for tok, cnt in Counter(ref).items():
                max_ref[tok] = max(max_ref[tok], cnt)
        total_clipped += sum(min(cnt, max_ref[tok]) for tok, cnt in counts.items())
        total_cand += len(candidate)
        total_ref += _closest_ref_len(len(candidate), [len(r) for r in refs])
    precision = total_clipped / total_cand
    if total_cand < total_ref:
        precision *= math.exp(1.0 - total_ref / total_cand)
    return precision


def _ngram_counts(tokens: list[str], max_n: int = CIDER_MAX_N) -> Counter:
    counts = Counter()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i:i + n])] += 1
    return counts


class CiderD:
    """CIDEr-D scorer with document frequencies fit on a reference corpus."""

    def __init__(self, references: list[list[list[str]]]):
        if len(references) < 2:
            raise CorpusTooSmallError(
                "CIDEr-D needs at least 2 articles to define document frequencies")
        self.doc_freq: dict[tuple, float] = defaultdict(float)
        for refs in references:
            seen = set()
            for ref in refs:
                seen.update(_ngram_counts(ref).keys())
            for ngram in seen:
                self.doc_freq[ngram] += 1.0
        self.log_corpus = math.log(float(len(references)))

    def _tfidf(self, counts: Counter):
        vec = [defaultdict(float) for _ in range(CIDER_MAX_N)]
        norm = [0.0] * CIDER_MAX_N
        for ngram, term_freq in counts.items():
            idf = self.log_corpus - math.log(max(1.0, self.doc_freq[ngram]))
            n = len(ngram) - 1
            vec[n][ngram] = term_freq * idf
            norm[n] += vec[n][ngram] ** 2
        return vec, [math.sqrt(x) for x in norm]

    def score(self, candidate: list[str], references: list[list[str]]) -> float:
        refs = _clean_refs(candidate, references)
        cand_vec, cand_norm = self._tfidf(_ngram_counts(candidate))
        total = 0.0
        for ref in refs:
            ref_vec, ref_norm = self._tfidf(_ngram_counts(ref))
            delta = float(len(candidate) - len(ref))
            penalty = math.exp(-(delta * delta) / (2.0 * CIDER_SIGMA ** 2))
            for n in range(CIDER_MAX_N):
                val = 0.0
                for ngram, weight in cand_vec[n].items():
                    val += min(weight, ref_vec[n][ngram]) * ref_vec[n][ngram]
                if cand_norm[n] != 0.0 and ref_norm[n] != 0.0:
                    val /= cand_norm[n] * ref_norm[n]
                total += val * penalty
        # average over n and references, x10 by convention
        return total / CIDER_MAX_N / len(refs) * 10.0

    __call__ = score


def cider_d(candidates: list[list[str]], references: list[list[list[str]]]) -> float:
    """Corpus-mean CIDEr-D of one candidate per article."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references must align per article")
    scorer = CiderD(references)
    scores = [scorer.score(c, r) for c, r in zip(candidates, references)]
    return sum(scores) / len(scores)


def top_n_score(per_article_candidates: list[list[list[str]]],
                references: list[list[list[str]]], n: int, metric,
                mode: str = "mean") -> float:
    """Score all candidates per article, keep the N best, then average.

    ``mode="mean"`` averages the N best scores per article (default);
    ``mode="max"`` takes the single best within the top N, which for a
    ranked list equals the article's best score.
    """
    if mode not in ("mean", "max"):
        raise ValueError("mode must be 'mean' or 'max'")
    per_article = []
    for candidates, refs in zip(per_article_candidates, references):
        scores = sorted((metric(c, refs) for c in candidates), reverse=True)
        top = scores[:n]
        per_article.append(max(top) if mode == "max" else sum(top) / len(top))
    return sum(per_article) / len(per_article)


def diversity_count(per_article_candidates: list[list[list[str]]]) -> float:
    """Mean number of distinct candidates per article."""
    if not per_article_candidates:
        return 0.0
    totals = [len({tuple(c) for c in cands}) for cands in per_article_candidates]
    return sum(totals) / len(totals)


@dataclass
class ScoreReport:
    """Table-style scores, scaled so an exact match reads as 100."""

    n_values: list[int]
    top_n_mode: str
    scores: dict[str, dict[int, float]]  # metric -> {N: value}
    diversity: float
    per_article: dict[str, dict[str, dict[int, float]]] = field(default_factory=dict)
    meteor: str = "unavailable"

    def to_dict(self) -> dict:
        return {
            "n_values": self.n_values,
            "top_n_mode": self.top_n_mode,
            "scores": {m: {str(n): v for n, v in by_n.items()}
                       for m, by_n in self.scores.items()},
            "diversity": self.diversity,
            "per_article": {a: {m: {str(n): v for n, v in by_n.items()}
                                for m, by_n in by_m.items()}
                            for a, by_m in self.per_article.items()},
            "meteor": self.meteor,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _scaled(metric_name: str, value: float) -> float:
    # rouge/bleu live in [0,1]; cider's native scale already carries a x10
    return value * 10.0 if metric_name == "cider_d" else value * 100.0


def score_candidates(candidates_by_article: dict[str, list[list[str]]],
                     references_by_article: dict[str, list[list[str]]],
                     n_values: list[int], mode: str = "mean") -> ScoreReport:
    """Evaluate grouped candidates against grouped references for each N."""
    ids = sorted(candidates_by_article)
    if set(ids) != set(references_by_article):
        raise ValueError("article ids differ between candidates and references")
    cand_lists = [candidates_by_article[a] for a in ids]
    ref_lists = [references_by_article[a] for a in ids]
    cider = CiderD(ref_lists)
    metric_fns = {"rouge_l": rouge_l, "bleu_1": bleu_1, "cider_d": cider}

    scores: dict[str, dict[int, float]] = {m: {} for m in metric_fns}
    per_article: dict[str, dict[str, dict[int, float]]] = {
        a: {m: {} for m in metric_fns} for a in ids}
    for name, fn in metric_fns.items():
        for n in n_values:
            scores[name][n] = _scaled(name, top_n_score(cand_lists, ref_lists, n,
                                                        fn, mode))
            for article_id, cands, refs in zip(ids, cand_lists, ref_lists):
                per_article[article_id][name][n] = _scaled(
                    name, top_n_score([cands], [refs], n, fn, mode))
    return ScoreReport(
        n_values=list(n_values),
        top_n_mode=mode,
        scores=scores,
        diversity=diversity_count(cand_lists),
        per_article=per_article,
    )
