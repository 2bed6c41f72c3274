"""Topic-aware pointer-generator comment generation toolkit."""

from .corpus import Article, TrainingTriple, Vocab, build_triples, build_vocab, \
    load_dataset, save_dataset
from .generation import Candidate, GenConfig, decode, generate_comments
from .lda import TopicModel, article_topic_words, gibbs_train, topic_embedding, \
    topic_words
from .metrics import ScoreReport, bleu_1, cider_d, diversity_count, rouge_l, \
    top_n_score
from .model import EncodedArticle, ExtendedVocab, TpgnConfig, TpgnModel, \
    decode_step, encode_article
from .textrank import build_graph, extract_keywords, extract_sentence_keywords, rank
from .training import TrainConfig, TrainReport, nll_loss, train

__version__ = "0.1.0"

__all__ = [
    "Article", "TrainingTriple", "Vocab", "build_triples", "build_vocab",
    "load_dataset", "save_dataset",
    "Candidate", "GenConfig", "decode", "generate_comments",
    "TopicModel", "article_topic_words", "gibbs_train", "topic_embedding",
    "topic_words",
    "ScoreReport", "bleu_1", "cider_d", "diversity_count", "rouge_l", "top_n_score",
    "EncodedArticle", "ExtendedVocab", "TpgnConfig", "TpgnModel", "decode_step",
    "encode_article",
    "build_graph", "extract_keywords", "extract_sentence_keywords", "rank",
    "TrainConfig", "TrainReport", "nll_loss", "train",
]
