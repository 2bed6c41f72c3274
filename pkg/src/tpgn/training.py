"""Teacher-forced maximum-likelihood training with Adagrad.

Each triple contributes the mean per-token negative log-likelihood of its
target comment (start symbol prepended, stop symbol appended); batches
average over triples, gradients are clipped by global norm, and one Adagrad
step is taken per batch. A checkpoint is written after every epoch along
with a running best-loss checkpoint.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import lda, numcore as nc
from .corpus import START_ID, STOP_ID, TrainingTriple
from .errors import EmptyTargetError, NonFiniteLossError
from .model import EncodedArticle, TpgnModel, decode_step, encode_article, \
    initial_decoder_state

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    lr: float = 0.1
    accumulator_init: float = 0.1
    epochs: int = 10
    batch_size: int = 4
    max_article_len: int = 400
    max_comment_len: int = 100
    seed: int = 0
    clip_norm: float = 2.0
    topic_infer_iters: int = 20


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    wallclock: float


@dataclass
class TrainReport:
    model_variant: str
    epochs: list[EpochStats]
    best_epoch: int
    best_mean_loss: float

    def to_dict(self) -> dict:
        return {
            "model_variant": self.model_variant,
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_mean_loss": self.best_mean_loss,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def nll_loss(model: TpgnModel, enc: EncodedArticle, target: list[str]) -> nc.Tensor:
    """Mean per-step negative log-likelihood of the target under teacher forcing.

    Target tokens map into the extended vocabulary (article-local ids for
    in-article unknowns, UNK otherwise); probabilities are floored before
    the log so the loss stays finite.
    """
    if not target:
        raise EmptyTargetError("empty target comment")
    target_ids = [enc.extended_vocab.id(tok) for tok in target] + [STOP_ID]
    input_ids = [START_ID] + target_ids[:-1]
    state = initial_decoder_state(model, enc)
    total = None
    for inp, tgt in zip(input_ids, target_ids):
        dist, state = decode_step(model, enc, state, inp)
        step_logp = nc.log(nc.clip_min(nc.pick(dist, tgt), PROB_FLOOR))
        total = step_logp if total is None else nc.add(total, step_logp)
    return nc.scale(total, -1.0 / len(target_ids))


def _topic_cache(triples, topic_model, config):
    """Per-article topic words and priors, computed once per distinct article."""
    cache = {}
    for t in triples:
        key = tuple(t.article_tokens)
        if key not in cache:
            cache[key] = lda.article_topic_words(
                topic_model, t.article_tokens,
                infer_iters=config.topic_infer_iters, seed=config.seed)
    return cache


def triple_loss(model: TpgnModel, triple: TrainingTriple, topic_words, topic_prior,
                topic_model, config: TrainConfig) -> nc.Tensor:
    tokens = triple.article_tokens[:config.max_article_len]
    target = triple.target_comment[:config.max_comment_len]
    enc = encode_article(model, tokens, triple.keywords, topic_words, topic_prior,
                         topic_model)
    return nll_loss(model, enc, target)


def train(model: TpgnModel, triples: list[TrainingTriple], topic_model,
          config: TrainConfig, checkpoint_dir=None,
          log_fn=None) -> TrainReport:
    """Run seeded shuffled epochs over the triples and report per-epoch loss."""
    if not triples:
        raise EmptyTargetError("no training triples")
    params = model.parameters()
    nc.init_accumulators(params, config.accumulator_init)
    topics = _topic_cache(triples, topic_model, config)
    rng = np.random.default_rng(config.seed)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    epochs: list[EpochStats] = []
    best_epoch = 0
    best_loss = math.inf
    start = time.monotonic()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(triples))
        loss_sum = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [triples[i] for i in order[lo:lo + config.batch_size]]
            losses = []
            for triple in batch:
                topic_words, topic_prior = topics[tuple(triple.article_tokens)]
                losses.append(triple_loss(model, triple, topic_words, topic_prior,
                                          topic_model, config))
            total = losses[0]
            for extra in losses[1:]:
                total = nc.add(total, extra)
            batch_loss = nc.scale(total, 1.0 / len(losses))
            value = batch_loss.item()
            if not math.isfinite(value):
                raise NonFiniteLossError(
                    f"non-finite loss {value} at epoch {epoch} batch {lo // config.batch_size}")
            loss_sum += value * len(losses)
            nc.backward(batch_loss)
            nc.clip_gradients(params, config.clip_norm)
            nc.adagrad_step(params, config.lr)
        mean_loss = loss_sum / len(triples)
        epochs.append(EpochStats(epoch=epoch, mean_loss=mean_loss,
                                 wallclock=time.monotonic() - start))
        if log_fn is not None:
            log_fn(epoch, mean_loss)
        if ckpt_dir is not None:
            model.save(ckpt_dir / "last.ckpt")
        if mean_loss < best_loss:
            best_loss = mean_loss
            best_epoch = epoch
            if ckpt_dir is not None:
                model.save(ckpt_dir / "best.ckpt")
    return TrainReport(model_variant=model.config.variant_name(), epochs=epochs,
                       best_epoch=best_epoch, best_mean_loss=best_loss)
