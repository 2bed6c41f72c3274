"""Comment decoding: greedy and length-normalized beam search.

Multiple comments per article come from varying the keyword conditioning,
one decode per sentence-level keyword list; sampling is deliberately absent.
Sequences are scored by mean log-probability including the terminal stop
step (forced for length-capped sequences), and the beam decoder never
returns a sequence scoring below the greedy one under that score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import lda, numcore as nc, textrank
from .corpus import Article, PAD_ID, START_ID, STOP_ID
from .model import EncodedArticle, TpgnModel, decode_step, encode_article, \
    initial_decoder_state


@dataclass
class GenConfig:
    mode: str = "greedy"  # "greedy" | "beam"
    beam_width: int = 4
    max_len: int = 40
    dedup: bool = True
    keywords_per_sentence: int = 3
    topic_infer_iters: int = 20
    seed: int = 0


@dataclass
class Candidate:
    article_id: str
    sentence_index: int
    keywords: list[str]
    comment: list[str]


def _masked_probs(dist: np.ndarray) -> np.ndarray:
    """Zero out ids that must never be emitted (padding and start)."""
    p = dist.copy()
    p[PAD_ID] = 0.0
    p[START_ID] = 0.0
    return p


def sequence_score(logps: list[float]) -> float:
    """Length-normalized score: mean log-probability over emitted steps."""
    return sum(logps) / len(logps) if logps else -np.inf


def _greedy(model: TpgnModel, enc: EncodedArticle, max_len: int):
    state = initial_decoder_state(model, enc)
    token_ids: list[int] = []
    logps: list[float] = []
    current = START_ID
    stopped = False
    for _ in range(max_len):
        dist, state = decode_step(model, enc, state, current)
        probs = _masked_probs(dist.data)
        chosen = int(np.argmax(probs))
        logps.append(float(np.log(max(dist.data[chosen], 1e-300))))
        if chosen == STOP_ID:
            stopped = True
            break
        token_ids.append(chosen)
        current = chosen
    if not stopped:
        # score length-capped sequences with a forced terminal stop so every
        # sequence's score means the same thing
        dist, _ = decode_step(model, enc, state, current)
        logps.append(float(np.log(max(dist.data[STOP_ID], 1e-300))))
    return token_ids, sequence_score(logps)


@dataclass
class _Beam:
    token_ids: list[int]
    logps: list[float]
    state: object
    next_input: int

    @property
    def score(self) -> float:
        return sequence_score(self.logps)


def _beam_search(model: TpgnModel, enc: EncodedArticle, width: int, max_len: int):
    start = _Beam([], [], initial_decoder_state(model, enc), START_ID)
    live = [start]
    finished: list[tuple[list[int], float]] = []
    for _ in range(max_len):
        candidates: list[_Beam] = []
        for beam in live:
            dist, state = decode_step(model, enc, beam.state, beam.next_input)
            probs = _masked_probs(dist.data)
            # stable sort keeps the argmax tie-break identical to greedy
            order = np.argsort(-probs, kind="stable")[:width]
            for token_id in order:
                token_id = int(token_id)
                logp = float(np.log(max(dist.data[token_id], 1e-300)))
                candidates.append(_Beam(beam.token_ids + [token_id],
                                        beam.logps + [logp], state, token_id))
        candidates.sort(key=lambda b: -b.score)
        live = []
        for cand in candidates:
            if cand.token_ids[-1] == STOP_ID:
                finished.append((cand.token_ids[:-1], cand.score))
            elif len(live) < width:
                live.append(cand)
            if len(live) >= width and len(finished) >= width:
                break
        if not live:
            break
    for beam in live:
        dist, _ = decode_step(model, enc, beam.state, beam.next_input)
        stop_logp = float(np.log(max(dist.data[STOP_ID], 1e-300)))
        finished.append((beam.token_ids, sequence_score(beam.logps + [stop_logp])))
    finished.sort(key=lambda pair: -pair[1])
    return finished[0]


def decode(model: TpgnModel, enc: EncodedArticle, config: GenConfig) -> list[str]:
    """Decode one comment; extended ids render back to their source tokens."""
    with nc.no_grad():
        greedy_ids, greedy_score = _greedy(model, enc, config.max_len)
        if config.mode == "beam" and config.beam_width > 1:
            beam_ids, beam_score = _beam_search(model, enc, config.beam_width,
                                                config.max_len)
            if beam_score >= greedy_score:
                greedy_ids = beam_ids
    return [enc.extended_vocab.token(i) for i in greedy_ids]


def generate_comments(model: TpgnModel, article: Article, topic_model,
                      config: GenConfig) -> list[Candidate]:
    """One decoded comment per sentence-level keyword list, duplicates removed.

    Topic words are fixed per article; only the keyword conditioning varies
    across sentences. Output order follows sentence order.
    """
    sentence_keywords = textrank.extract_sentence_keywords(
        article, config.keywords_per_sentence)
    if not sentence_keywords:
        return []
    topic_words, topic_prior = lda.article_topic_words(
        topic_model, article.tokens, infer_iters=config.topic_infer_iters,
        seed=config.seed)
    candidates: list[Candidate] = []
    seen: set[tuple[str, ...]] = set()
    for index, keywords in enumerate(sentence_keywords):
        enc = encode_article(model, article.tokens, keywords, topic_words,
                             topic_prior, topic_model)
        comment = decode(model, enc, config)
        if config.dedup:
            key = tuple(comment)
            if key in seen:
                continue
            seen.add(key)
        candidates.append(Candidate(article_id=article.id, sentence_index=index,
                                    keywords=keywords, comment=comment))
    return candidates


def save_candidates(candidates: list[Candidate], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps({
                "article_id": c.article_id,
                "sentence_index": c.sentence_index,
                "keywords": c.keywords,
                "comment": " ".join(c.comment),
            }, ensure_ascii=False) + "\n")


def load_candidates(path) -> list[Candidate]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(Candidate(
                article_id=str(obj["article_id"]),
                sentence_index=int(obj["sentence_index"]),
                keywords=list(obj["keywords"]),
                comment=obj["comment"].split(),
            ))
    return out
