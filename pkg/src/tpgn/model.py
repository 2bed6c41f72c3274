"""Topic-aware pointer-generator model.

The encoder is a BiLSTM over the article; a second BiLSTM summarizes the
keyword list and an MLP maps the pooled topic-word distribution into the
same space. Both summaries attend over the article states, and the four
resulting vectors are concatenated into a per-article topic-information
vector that feeds the decoder attention and the copy/generate gate. The
output distribution mixes vocabulary softmax mass with attention mass
copied onto source positions, over a per-article extended vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .corpus import UNK_ID, Vocab
from .errors import EmptyArticleError, ShapeMismatchError
from .lda import TopicModel, topic_embedding
from .numcore import LstmCell, Parameter, Tensor


@dataclass
class TpgnConfig:
    embed_dim: int = 128
    hidden_dim: int = 256
    vocab_cap: int = 9000
    n_topics: int = 10
    use_keyword_attention: bool = True
    use_topic_attention: bool = True
    use_pointer: bool = True
    # restore the previous-token term in the copy/generate gate (off by default)
    use_prev_token_in_gate: bool = False
    init_seed: int = 13
    init_scale: float = 0.1

    def variant_name(self) -> str:
        if self.use_keyword_attention and self.use_topic_attention:
            name = "tpgn"
        elif self.use_keyword_attention:
            name = "keyword-level-tpgn"
        elif self.use_topic_attention:
            name = "topic-level-tpgn"
        elif self.use_pointer:
            return "pointer-generator"
        else:
            return "seq2seq-attn"
        return name if self.use_pointer else name + "-no-pointer"


class ExtendedVocab:
    """Base vocabulary plus temporary ids for this article's unknown tokens."""

    def __init__(self, base: Vocab, article_tokens: list[str]):
        self.base = base
        self.extra: list[str] = []
        self._extra_ids: dict[str, int] = {}
        for tok in article_tokens:
            if tok not in base and tok not in self._extra_ids:
                self._extra_ids[tok] = base.size + len(self.extra)
                self.extra.append(tok)

    @property
    def size(self) -> int:
        return self.base.size + len(self.extra)

    def id(self, token: str) -> int:
        """Extended id: base id, article-local extra id, or UNK."""
        base_id = self.base.id_of.get(token)
        if base_id is not None:
            return base_id
        return self._extra_ids.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        if token_id < self.base.size:
            return self.base.token(token_id)
        return self.extra[token_id - self.base.size]


@dataclass
class EncodedArticle:
    states: list[Tensor]          # per-position 2H encoder states
    state_matrix: Tensor          # same states stacked, (n, 2H)
    final_state: Tensor           # (2H,)
    keyword_repr: Tensor          # (2H,)
    keyword_context: Tensor       # (2H,)
    topic_repr: Tensor            # (2H,)
    topic_context: Tensor         # (2H,)
    topic_info: Tensor            # (8H,) concat of the four above
    extended_vocab: ExtendedVocab
    position_ids: np.ndarray          # extended id of the token at each position
    attn_memory: Tensor | None = None  # cached state_matrix @ W_mem.T, (n, A)


@dataclass
class DecoderState:
    hidden: Tensor   # (H,)
    cell: Tensor     # (H,)
    context: Tensor  # (2H,) attention context fed back as input


class Attention:
    """Additive attention: score_i = v . tanh(W_mem h_i + W_query q)."""

    def __init__(self, rng, memory_dim: int, query_dim: int, attn_dim: int,
                 prefix: str, init_scale: float):
        self.w_mem = Parameter(rng.uniform(-init_scale, init_scale, (attn_dim, memory_dim)),
                               name=f"{prefix}.w_mem")
        self.w_query = Parameter(rng.uniform(-init_scale, init_scale, (attn_dim, query_dim)),
                                 name=f"{prefix}.w_query")
        self.v = Parameter(rng.uniform(-init_scale, init_scale, (attn_dim,)),
                           name=f"{prefix}.v")

    def parameters(self):
        return [self.w_mem, self.w_query, self.v]

    def __call__(self, memory: Tensor, query: Tensor):
        """Returns (weights, context) over the rows of `memory`."""
        projected = nc.matmul(memory, _transpose(self.w_mem))
        scores = nc.matmul(nc.tanh(nc.add(projected, nc.matmul(self.w_query, query))),
                           self.v)
        weights = nc.softmax(scores)
        return weights, nc.matmul(weights, memory)


def _transpose(p: Parameter) -> Tensor:
    """View a matrix parameter transposed, with gradients routed back."""
    return nc.Tensor(p.data.T, parents=(p,), vjp=lambda g: (g.T,))


class TpgnModel:
    """All learned parameters plus the forward operations."""

    def __init__(self, config: TpgnConfig, vocab: Vocab):
        self.config = config
        self.vocab = vocab
        e, h, t = config.embed_dim, config.hidden_dim, config.n_topics
        s = config.init_scale
        rng = np.random.default_rng(config.init_seed)

        def uniform(shape, name):
            return Parameter(rng.uniform(-s, s, shape), name=name)

        def zeros(shape, name):
            return Parameter(np.zeros(shape), name=name)

        self.embedding = uniform((vocab.size, e), "embedding")
        self.enc_fwd = LstmCell.create(rng, e, h, "enc_fwd", s)
        self.enc_bwd = LstmCell.create(rng, e, h, "enc_bwd", s)
        self.kw_fwd = LstmCell.create(rng, e, h, "kw_fwd", s)
        self.kw_bwd = LstmCell.create(rng, e, h, "kw_bwd", s)
        self.decoder = LstmCell.create(rng, e + 2 * h, h, "decoder", s)
        self.reduce_h = uniform((h, 2 * h), "reduce_h.w")
        self.reduce_h_bias = zeros((h,), "reduce_h.bias")
        self.reduce_c = uniform((h, 2 * h), "reduce_c.w")
        self.reduce_c_bias = zeros((h,), "reduce_c.bias")
        self.kw_attn = Attention(rng, 2 * h, 2 * h, 2 * h, "kw_attn", s)
        self.topic_mlp = [
            (uniform((2 * h, t), "topic_mlp.w1"), zeros((2 * h,), "topic_mlp.b1"), "tanh"),
            (uniform((2 * h, 2 * h), "topic_mlp.w2"), zeros((2 * h,), "topic_mlp.b2"), "tanh"),
        ]
        self.topic_attn = Attention(rng, 2 * h, 2 * h, 2 * h, "topic_attn", s)
        self.dec_w_mem = uniform((2 * h, 2 * h), "dec_attn.w_mem")
        self.dec_w_state = uniform((2 * h, h), "dec_attn.w_state")
        self.dec_w_topic = uniform((2 * h, 8 * h), "dec_attn.w_topic")
        self.dec_v = uniform((2 * h,), "dec_attn.v")
        self.gate_w_context = uniform((2 * h,), "gate.w_context")
        self.gate_w_state = uniform((h,), "gate.w_state")
        self.gate_w_topic = uniform((8 * h,), "gate.w_topic")
        self.gate_w_prev = uniform((e,), "gate.w_prev")
        self.gate_bias = zeros((), "gate.bias")
        self.out_w = uniform((vocab.size, 3 * h), "out.w")
        self.out_bias = zeros((vocab.size,), "out.bias")

    def named_parameters(self) -> dict[str, Parameter]:
        params: dict[str, Parameter] = {}
        for p in self.parameters():
            params[p.name] = p
        return params

    def parameters(self) -> list[Parameter]:
        params = [self.embedding]
        for cell in (self.enc_fwd, self.enc_bwd, self.kw_fwd, self.kw_bwd, self.decoder):
            params.extend(cell.parameters())
        params.extend([self.reduce_h, self.reduce_h_bias,
                       self.reduce_c, self.reduce_c_bias])
        params.extend(self.kw_attn.parameters())
        for w, b, _ in self.topic_mlp:
            params.extend([w, b])
        params.extend(self.topic_attn.parameters())
        params.extend([self.dec_w_mem, self.dec_w_state, self.dec_w_topic, self.dec_v,
                       self.gate_w_context, self.gate_w_state, self.gate_w_topic,
                       self.gate_w_prev, self.gate_bias, self.out_w, self.out_bias])
        return params

    def save(self, path) -> None:
        nc.save_checkpoint(path, self.named_parameters())

    def load(self, path) -> None:
        nc.restore_parameters(self.named_parameters(), nc.load_checkpoint(path))

    def embed_token(self, token_id: int) -> Tensor:
        """Embedding lookup; extended ids beyond the base vocabulary embed as UNK."""
        if token_id >= self.vocab.size:
            token_id = UNK_ID
        return nc.row(self.embedding, token_id)

    def embed_tokens(self, tokens: list[str]) -> list[Tensor]:
        ids = [self.vocab.id(tok) for tok in tokens]
        mat = nc.rows(self.embedding, ids)
        return [nc.row(mat, i) for i in range(len(ids))]


def encode_article(model: TpgnModel, article_tokens: list[str], keywords: list[str],
                   topic_words: list[str], topic_prior: np.ndarray,
                   topic_model: TopicModel | None = None) -> EncodedArticle:
    """Encode one article together with its keyword and topic conditioning.

    `topic_prior` is used as the MLP input when `topic_words` is empty;
    otherwise the mean of the topic words' topic-distribution embeddings is
    used (which requires `topic_model`).
    """
    if not article_tokens:
        raise EmptyArticleError("cannot encode an empty article")
    cfg = model.config
    two_h = 2 * cfg.hidden_dim

    states, final = nc.bilstm_encode(model.enc_fwd, model.enc_bwd,
                                     model.embed_tokens(article_tokens))
    state_matrix = nc.stack(states)

    if cfg.use_keyword_attention and keywords:
        _, kw_final = nc.bilstm_encode(model.kw_fwd, model.kw_bwd,
                                       model.embed_tokens(keywords))
        _, kw_context = model.kw_attn(state_matrix, kw_final)
    elif cfg.use_keyword_attention:
        kw_final = nc.zeros(two_h)
        _, kw_context = model.kw_attn(state_matrix, kw_final)
    else:
        kw_final = nc.zeros(two_h)
        kw_context = nc.zeros(two_h)

    if cfg.use_topic_attention:
        if topic_words:
            if topic_model is None:
                raise ValueError("topic_model required when topic_words are given")
            dists = np.stack([topic_embedding(topic_model, w).dist for w in topic_words])
            pooled = nc.tensor(dists.mean(axis=0))
        else:
            pooled = nc.tensor(np.asarray(topic_prior, dtype=np.float64))
        if pooled.data.shape != (cfg.n_topics,):
            raise ShapeMismatchError(
                f"topic vector has shape {pooled.data.shape}, expected ({cfg.n_topics},)")
        topic_repr = nc.mlp_forward(model.topic_mlp, pooled)
        _, topic_context = model.topic_attn(state_matrix, topic_repr)
    else:
        topic_repr = nc.zeros(two_h)
        topic_context = nc.zeros(two_h)

    topic_info = nc.concat([kw_final, kw_context, topic_repr, topic_context])
    ext = ExtendedVocab(model.vocab, article_tokens)
    position_ids = np.array([ext.id(tok) for tok in article_tokens], dtype=np.intp)
    attn_memory = nc.matmul(state_matrix, _transpose(model.dec_w_mem))
    return EncodedArticle(
        states=states,
        state_matrix=state_matrix,
        final_state=final,
        keyword_repr=kw_final,
        keyword_context=kw_context,
        topic_repr=topic_repr,
        topic_context=topic_context,
        topic_info=topic_info,
        extended_vocab=ext,
        position_ids=position_ids,
        attn_memory=attn_memory,
    )


def initial_decoder_state(model: TpgnModel, enc: EncodedArticle) -> DecoderState:
    """Project the encoder's final state down to the decoder dimensions."""
    hidden = nc.add(nc.matmul(model.reduce_h, enc.final_state), model.reduce_h_bias)
    cell = nc.add(nc.matmul(model.reduce_c, enc.final_state), model.reduce_c_bias)
    return DecoderState(hidden=hidden, cell=cell,
                        context=nc.zeros(2 * model.config.hidden_dim))


def decoder_attention(model: TpgnModel, states, decoder_state: Tensor,
                      topic_info: Tensor, attn_memory: Tensor | None = None):
    """Attention over encoder states with the topic vector as an extra input.

    Returns (weights, context). `states` may be a list of per-position
    tensors or an already stacked (n, 2H) tensor; `attn_memory` optionally
    carries the precomputed memory projection.
    """
    state_matrix = nc.stack(states) if isinstance(states, list) else states
    if attn_memory is None:
        attn_memory = nc.matmul(state_matrix, _transpose(model.dec_w_mem))
    query = nc.add(nc.matmul(model.dec_w_state, decoder_state),
                   nc.matmul(model.dec_w_topic, topic_info))
    scores = nc.matmul(nc.tanh(nc.add(attn_memory, query)), model.dec_v)
    weights = nc.softmax(scores)
    context = nc.matmul(weights, state_matrix)
    return weights, context


def generation_probability(model: TpgnModel, context: Tensor, decoder_state: Tensor,
                           topic_info: Tensor, prev_embedding: Tensor | None = None) -> Tensor:
    """Scalar gate weighting vocabulary generation against copying.

    With the pointer disabled this is the constant 1 (pure generation).
    """
    if not model.config.use_pointer:
        return nc.tensor(1.0)
    logit = nc.add(nc.add(nc.dot(model.gate_w_context, context),
                          nc.dot(model.gate_w_state, decoder_state)),
                   nc.add(nc.dot(model.gate_w_topic, topic_info), model.gate_bias))
    if model.config.use_prev_token_in_gate and prev_embedding is not None:
        logit = nc.add(logit, nc.dot(model.gate_w_prev, prev_embedding))
    return nc.sigmoid(logit)


def output_distribution(model: TpgnModel, gen_prob: Tensor, vocab_logits: Tensor,
                        attn_weights: Tensor, position_ids: np.ndarray,
                        n_extra: int) -> Tensor:
    """Mix the vocabulary softmax with attention mass copied to source tokens.

    P(w) = gen_prob * softmax(vocab_logits)[w] (zero on the extra ids)
         + (1 - gen_prob) * sum of attention weights at positions holding w.
    """
    if attn_weights.data.shape[0] != len(position_ids):
        raise ShapeMismatchError("attention weights misaligned with article positions")
    vocab_dist = nc.softmax(vocab_logits)
    generated = nc.mul(gen_prob, vocab_dist)
    if n_extra > 0:
        generated = nc.concat([generated, nc.zeros(n_extra)])
    copy_mass = nc.mul(nc.sub(nc.tensor(1.0), gen_prob), attn_weights)
    return nc.scatter_add(generated, position_ids, copy_mass)


def decode_step(model: TpgnModel, enc: EncodedArticle, state: DecoderState,
                input_token_id: int):
    """One teacher-forcible decoder step.

    Returns the probability distribution over the extended vocabulary and
    the next decoder state.
    """
    prev_embedding = model.embed_token(input_token_id)
    x = nc.concat([prev_embedding, state.context])
    hidden, cell = nc.lstm_step(model.decoder, x, state.hidden, state.cell)
    attn_weights, context = decoder_attention(
        model, enc.state_matrix, hidden, enc.topic_info, attn_memory=enc.attn_memory)
    gen_prob = generation_probability(model, context, hidden, enc.topic_info,
                                      prev_embedding)
    vocab_logits = nc.add(nc.matmul(model.out_w, nc.concat([hidden, context])),
                          model.out_bias)
    dist = output_distribution(model, gen_prob, vocab_logits, attn_weights,
                               enc.position_ids, len(enc.extended_vocab.extra))
    return dist, DecoderState(hidden=hidden, cell=cell, context=context)
