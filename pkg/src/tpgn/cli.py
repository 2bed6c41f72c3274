"""Command-line pipeline: prep, lda, train, generate, evaluate.

Every option can also be supplied through a ``key=value`` config file
(``--config``); explicit flags override file values, and keys that no
subcommand understands are rejected. Exit codes: 0 success, 2 input error,
3 numeric failure, 4 model/config mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import corpus, generation, lda, metrics, textrank, training
from .errors import (
    CorpusTooSmallError,
    EmptyArticleError,
    EmptyCorpusError,
    EmptyInputError,
    EmptySequenceError,
    EmptyTargetError,
    NoCommentsError,
    NonFiniteLossError,
    ParseError,
    ShapeMismatchError,
    UnknownWordError,
)
from .model import TpgnConfig, TpgnModel

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_MISMATCH = 4

_INPUT_ERRORS = (ParseError, EmptyCorpusError, NoCommentsError, EmptyInputError,
                 EmptyArticleError, EmptySequenceError, EmptyTargetError,
                 UnknownWordError, CorpusTooSmallError, FileNotFoundError,
                 IsADirectoryError, PermissionError, ValueError)


@dataclass
class Opt:
    name: str
    type: type = str
    default: object = None
    required: bool = False
    flag: bool = False  # boolean option, false unless given
    input_path: bool = False  # validated for existence before any work

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


COMMAND_OPTS: dict[str, list[Opt]] = {
    "prep": [
        Opt("dataset", str, required=True, input_path=True),
        Opt("out-dir", str, required=True),
        Opt("vocab-cap", int, 9000),
        Opt("keywords-per-article", int, 5),
        Opt("window", int, 5),
        Opt("subset-size-max", int, 2),
        Opt("max-triples-per-article", int, 32),
        Opt("seed", int, 0),
    ],
    "lda": [
        Opt("dataset", str, required=True, input_path=True),
        Opt("out", str, required=True),
        Opt("topics", int, required=True),
        Opt("iters", int, 200),
        Opt("alpha", float, None),
        Opt("beta", float, lda.DEFAULT_BETA),
        Opt("top-n", int, 50),
        Opt("seed", int, 0),
    ],
    "train": [
        Opt("triples", str, required=True, input_path=True),
        Opt("vocab", str, required=True, input_path=True),
        Opt("topic-model", str, required=True, input_path=True),
        Opt("out-dir", str, required=True),
        Opt("embed-dim", int, 128),
        Opt("hidden-dim", int, 256),
        Opt("epochs", int, 10),
        Opt("batch-size", int, 4),
        Opt("lr", float, 0.1),
        Opt("accumulator-init", float, 0.1),
        Opt("max-article-len", int, 400),
        Opt("max-comment-len", int, 100),
        Opt("clip-norm", float, 2.0),
        Opt("topic-infer-iters", int, 20),
        Opt("init-seed", int, 13),
        Opt("seed", int, 0),
        Opt("no-keyword-attn", flag=True),
        Opt("no-topic-attn", flag=True),
        Opt("no-pointer", flag=True),
        Opt("gate-prev-token", flag=True),
    ],
    "generate": [
        Opt("checkpoint", str, required=True, input_path=True),
        Opt("dataset", str, required=True, input_path=True),
        Opt("vocab", str, required=True, input_path=True),
        Opt("topic-model", str, required=True, input_path=True),
        Opt("out", str, required=True),
        Opt("embed-dim", int, 128),
        Opt("hidden-dim", int, 256),
        Opt("init-seed", int, 13),
        Opt("mode", str, "greedy"),
        Opt("beam-width", int, 4),
        Opt("max-len", int, 40),
        Opt("keywords-per-sentence", int, 3),
        Opt("topic-infer-iters", int, 20),
        Opt("seed", int, 0),
        Opt("no-dedup", flag=True),
        Opt("no-keyword-attn", flag=True),
        Opt("no-topic-attn", flag=True),
        Opt("no-pointer", flag=True),
        Opt("gate-prev-token", flag=True),
    ],
    "evaluate": [
        Opt("candidates", str, required=True, input_path=True),
        Opt("references", str, required=True, input_path=True),
        Opt("out-dir", str, required=True),
        Opt("top-n", str, "1,3,5"),
        Opt("top-n-mode", str, "mean"),
    ],
}

_ALL_KEYS = {opt.name for opts in COMMAND_OPTS.values() for opt in opts}


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(line_no, "expected key=value")
            key, _, value = stripped.partition("=")
            key = key.strip().replace("_", "-")
            if key not in _ALL_KEYS:
                raise ParseError(line_no, f"unknown config key {key!r}")
            values[key] = value.strip()
    return values


def _coerce(opt: Opt, raw: str):
    if opt.flag:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"option {opt.name}: expected a boolean, got {raw!r}")
    return opt.type(raw)


class Settings(dict):
    __getattr__ = dict.__getitem__


def _resolve(command: str, args: argparse.Namespace) -> Settings:
    """Merge defaults, config-file values, and explicit flags (flags win)."""
    file_values = _parse_config_file(args.config) if args.config else {}
    settings = Settings()
    for opt in COMMAND_OPTS[command]:
        cli_value = getattr(args, opt.dest)
        if cli_value is not None:
            settings[opt.dest] = cli_value
        elif opt.name in file_values:
            settings[opt.dest] = _coerce(opt, file_values[opt.name])
        else:
            settings[opt.dest] = False if opt.flag else opt.default
        if opt.required and settings[opt.dest] is None:
            raise ValueError(f"missing required option --{opt.name}")
        if opt.input_path and not Path(settings[opt.dest]).exists():
            raise FileNotFoundError(f"--{opt.name}: no such file: {settings[opt.dest]}")
    return settings


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("TPGN_THREADS", "1")))
    except ValueError:
        return 1


def _parallel_map(fn, items):
    threads = _thread_count()
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands


def cmd_prep(args) -> int:
    cfg = _resolve("prep", args)
    articles = corpus.load_dataset(cfg.dataset)
    vocab = corpus.build_vocab(articles, cfg.vocab_cap)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(out_dir / "vocab.txt")

    all_triples: list[corpus.TrainingTriple] = []
    with open(out_dir / "keywords.jsonl", "w", encoding="utf-8") as fh:
        for index, article in enumerate(articles):
            keywords = textrank.extract_keywords(
                article.tokens, cfg.keywords_per_article, cfg.window)
            fh.write(json.dumps({"id": article.id, "keywords": keywords},
                                ensure_ascii=False) + "\n")
            all_triples.extend(corpus.build_triples(
                article, keywords,
                subset_size_max=cfg.subset_size_max,
                rng_seed=cfg.seed + index,
                max_triples=cfg.max_triples_per_article))
    corpus.save_triples(all_triples, out_dir / "triples.jsonl")

    matched = sum(1 for t in all_triples if t.match_kind == "matched")
    print(f"articles: {len(articles)}")
    print(f"vocab: {vocab.size} tokens")
    print(f"triples: {len(all_triples)} "
          f"(matched {matched}, random_fallback {len(all_triples) - matched})")
    return EXIT_OK


def cmd_lda(args) -> int:
    cfg = _resolve("lda", args)
    if cfg.topics < 2:
        raise ValueError("--topics must be at least 2")
    articles = corpus.load_dataset(cfg.dataset)
    docs = [a.tokens for a in articles]
    model = lda.gibbs_train(
        docs, cfg.topics, alpha=cfg.alpha, beta=cfg.beta, iters=cfg.iters,
        seed=cfg.seed, top_n=cfg.top_n, log_every=100,
        log_fn=lambda sweep, mlc: print(f"iter {sweep}: mean log conditional {mlc:.4f}"))
    lda.save_topic_model(model, cfg.out)
    print(f"topics: {model.n_topics}, vocabulary: {model.vocab_size}, "
          f"tokens: {int(model.word_topic_counts.sum())}")
    return EXIT_OK


def _model_config(cfg, n_topics: int) -> TpgnConfig:
    return TpgnConfig(
        embed_dim=cfg.embed_dim,
        hidden_dim=cfg.hidden_dim,
        n_topics=n_topics,
        use_keyword_attention=not cfg.no_keyword_attn,
        use_topic_attention=not cfg.no_topic_attn,
        use_pointer=not cfg.no_pointer,
        use_prev_token_in_gate=cfg.gate_prev_token,
        init_seed=cfg.init_seed,
    )


def cmd_train(args) -> int:
    cfg = _resolve("train", args)
    triples = corpus.load_triples(cfg.triples)
    vocab = corpus.Vocab.load(cfg.vocab)
    topic_model = lda.load_topic_model(cfg.topic_model)
    model = TpgnModel(_model_config(cfg, topic_model.n_topics), vocab)
    train_config = training.TrainConfig(
        lr=cfg.lr, accumulator_init=cfg.accumulator_init, epochs=cfg.epochs,
        batch_size=cfg.batch_size, max_article_len=cfg.max_article_len,
        max_comment_len=cfg.max_comment_len, seed=cfg.seed,
        clip_norm=cfg.clip_norm, topic_infer_iters=cfg.topic_infer_iters)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = training.train(
        model, triples, topic_model, train_config, checkpoint_dir=out_dir,
        log_fn=lambda epoch, loss: print(f"epoch {epoch}: mean loss {loss:.4f}"))
    result.save(out_dir / "report.json")

    from . import report as report_mod
    report_mod.save_training_csv(result, out_dir / "report.csv")
    report_mod.save_loss_curve(result, out_dir / "loss_curve.png")
    print(f"variant: {result.model_variant}, best epoch {result.best_epoch} "
          f"(mean loss {result.best_mean_loss:.4f})")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _resolve("generate", args)
    if cfg.mode not in ("greedy", "beam"):
        raise ValueError("--mode must be greedy or beam")
    articles = corpus.load_dataset(cfg.dataset)
    vocab = corpus.Vocab.load(cfg.vocab)
    topic_model = lda.load_topic_model(cfg.topic_model)
    model = TpgnModel(_model_config(cfg, topic_model.n_topics), vocab)
    model.load(cfg.checkpoint)
    gen_config = generation.GenConfig(
        mode=cfg.mode, beam_width=cfg.beam_width, max_len=cfg.max_len,
        dedup=not cfg.no_dedup, keywords_per_sentence=cfg.keywords_per_sentence,
        topic_infer_iters=cfg.topic_infer_iters, seed=cfg.seed)

    per_article = _parallel_map(
        lambda article: generation.generate_comments(model, article, topic_model,
                                                     gen_config),
        articles)
    candidates = [c for group in per_article for c in group]
    generation.save_candidates(candidates, cfg.out)
    print(f"articles: {len(articles)}, comments: {len(candidates)}")
    return EXIT_OK


def _load_references(path) -> dict[str, list[list[str]]]:
    refs: dict[str, list[list[str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(line_no, f"invalid JSON: {err.msg}") from err
            if "id" not in obj or "comments" not in obj:
                raise ParseError(line_no, "missing field id or comments")
            refs[str(obj["id"])] = [c.split() for c in obj["comments"]]
    return refs


def cmd_evaluate(args) -> int:
    cfg = _resolve("evaluate", args)
    if cfg.top_n_mode not in ("mean", "max"):
        raise ValueError("--top-n-mode must be mean or max")
    n_values = [int(x) for x in str(cfg.top_n).split(",") if x.strip()]
    if not n_values or any(n < 1 for n in n_values):
        raise ValueError("--top-n must be a comma-separated list of positive ints")
    candidates = generation.load_candidates(cfg.candidates)
    references = _load_references(cfg.references)

    grouped: dict[str, list[list[str]]] = {}
    for cand in candidates:
        grouped.setdefault(cand.article_id, []).append(cand.comment)
    if set(grouped) != set(references):
        missing = sorted(set(grouped) ^ set(references))
        print(f"error: article-id mismatch between files: {missing[:5]}",
              file=sys.stderr)
        return EXIT_INPUT

    result = metrics.score_candidates(grouped, references, n_values,
                                      mode=cfg.top_n_mode)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.save(out_dir / "scores.json")

    from . import report as report_mod
    report_mod.save_score_csv(result, out_dir / "scores.csv")
    report_mod.save_score_figure(result, out_dir / "scores.png")
    for metric_name, by_n in result.scores.items():
        for n in n_values:
            print(f"{metric_name} N={n}: {by_n[n]:.2f}")
    print(f"diversity: {result.diversity:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpgn",
        description="topic-aware pointer-generator comment generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {"prep": cmd_prep, "lda": cmd_lda, "train": cmd_train,
                "generate": cmd_generate, "evaluate": cmd_evaluate}
    for command, opts in COMMAND_OPTS.items():
        cmd_parser = sub.add_parser(command)
        cmd_parser.add_argument("--config", default=None,
                                help="key=value config file; flags override it")
        for opt in opts:
            if opt.flag:
                cmd_parser.add_argument(f"--{opt.name}", action="store_const",
                                        const=True, default=None)
            else:
                cmd_parser.add_argument(f"--{opt.name}", type=opt.type, default=None)
        cmd_parser.set_defaults(func=handlers[command])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NonFiniteLossError as err:
        print(f"error: NonFiniteLossError: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ShapeMismatchError as err:
        print(f"error: ShapeMismatchError: {err}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
