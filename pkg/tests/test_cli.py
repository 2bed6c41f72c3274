"""End-to-end CLI pipeline: prep -> lda -> train -> generate -> evaluate."""

import json

import pytest

from tpgn import cli
from tpgn.corpus import save_dataset

from conftest import make_overfit_articles


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run the whole pipeline once on a small corpus."""
    root = tmp_path_factory.mktemp("pipeline")
    dataset = root / "dataset.jsonl"
    save_dataset(make_overfit_articles(n_per_theme=1), dataset)

    prep_dir = root / "prep"
    assert cli.main(["prep", "--dataset", str(dataset), "--out-dir", str(prep_dir),
                     "--vocab-cap", "200", "--seed", "3"]) == 0
    lda_path = root / "model.lda"
    assert cli.main(["lda", "--dataset", str(dataset), "--out", str(lda_path),
                     "--topics", "4", "--iters", "40", "--seed", "3",
                     "--top-n", "30"]) == 0
    run_dir = root / "run"
    assert cli.main(["train", "--triples", str(prep_dir / "triples.jsonl"),
                     "--vocab", str(prep_dir / "vocab.txt"),
                     "--topic-model", str(lda_path), "--out-dir", str(run_dir),
                     "--embed-dim", "8", "--hidden-dim", "10", "--epochs", "2",
                     "--batch-size", "4", "--seed", "0"]) == 0
    candidates = root / "candidates.jsonl"
    assert cli.main(["generate", "--checkpoint", str(run_dir / "best.ckpt"),
                     "--dataset", str(dataset),
                     "--vocab", str(prep_dir / "vocab.txt"),
                     "--topic-model", str(lda_path), "--out", str(candidates),
                     "--embed-dim", "8", "--hidden-dim", "10", "--max-len", "6",
                     "--keywords-per-sentence", "1"]) == 0
    eval_dir = root / "eval"
    assert cli.main(["evaluate", "--candidates", str(candidates),
                     "--references", str(dataset), "--out-dir", str(eval_dir),
                     "--top-n", "1,3,5"]) == 0
    return {"root": root, "dataset": dataset, "prep": prep_dir, "lda": lda_path,
            "run": run_dir, "candidates": candidates, "eval": eval_dir}


class TestPrep:
    def test_outputs_exist_with_counts(self, pipeline, capsys):
        prep = pipeline["prep"]
        assert (prep / "vocab.txt").exists()
        keywords = [json.loads(l) for l in
                    (prep / "keywords.jsonl").read_text().splitlines()]
        assert len(keywords) == 4
        assert all(k["keywords"] for k in keywords)
        triples = [json.loads(l) for l in
                   (prep / "triples.jsonl").read_text().splitlines()]
        assert len(triples) >= 4

    def test_rerun_byte_identical(self, pipeline, tmp_path):
        again = tmp_path / "prep2"
        assert cli.main(["prep", "--dataset", str(pipeline["dataset"]),
                         "--out-dir", str(again), "--vocab-cap", "200",
                         "--seed", "3"]) == 0
        for name in ("vocab.txt", "keywords.jsonl", "triples.jsonl"):
            assert (again / name).read_bytes() == \
                (pipeline["prep"] / name).read_bytes()

    def test_empty_dataset_exit_2(self, tmp_path, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert cli.main(["prep", "--dataset", str(empty),
                         "--out-dir", str(tmp_path / "out")]) == 2
        assert "EmptyCorpus" in capsys.readouterr().err

    def test_parse_error_exit_2_with_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "a", "title": "t", "body": "b"}\n')
        assert cli.main(["prep", "--dataset", str(bad),
                         "--out-dir", str(tmp_path / "out")]) == 2
        err = capsys.readouterr().err
        assert "line 1" in err and "comments" in err

    def test_missing_input_exit_2(self, tmp_path, capsys):
        assert cli.main(["prep", "--dataset", str(tmp_path / "nope.jsonl"),
                         "--out-dir", str(tmp_path / "out")]) == 2


class TestLda:
    def test_disjoint_docs_separate_topics(self, tmp_path):
        dataset = tmp_path / "two.jsonl"
        rows = [{"id": "d1", "title": "", "body": "cats cats purr purr whiskers",
                 "comments": ["x"]},
                {"id": "d2", "title": "", "body": "stocks stocks market market bonds",
                 "comments": ["y"]}]
        dataset.write_text("".join(json.dumps(r) + "\n" for r in rows))
        out = tmp_path / "m.lda"
        assert cli.main(["lda", "--dataset", str(dataset), "--out", str(out),
                         "--topics", "2", "--iters", "60", "--seed", "1"]) == 0
        from tpgn import lda as lda_mod
        model = lda_mod.load_topic_model(out)
        _, p1 = lda_mod.article_topic_words(model, ["cats", "purr"], seed=0)
        _, p2 = lda_mod.article_topic_words(model, ["stocks", "market"], seed=0)
        assert int(p1.argmax()) != int(p2.argmax())

    def test_same_seed_identical_file(self, pipeline, tmp_path):
        out = tmp_path / "again.lda"
        assert cli.main(["lda", "--dataset", str(pipeline["dataset"]),
                         "--out", str(out), "--topics", "4", "--iters", "40",
                         "--seed", "3", "--top-n", "30"]) == 0
        assert out.read_bytes() == pipeline["lda"].read_bytes()

    def test_topics_below_two_exit_2(self, pipeline, tmp_path, capsys):
        assert cli.main(["lda", "--dataset", str(pipeline["dataset"]),
                         "--out", str(tmp_path / "m.lda"), "--topics", "1"]) == 2


class TestTrain:
    def test_report_schema_and_artifacts(self, pipeline):
        run = pipeline["run"]
        for name in ("last.ckpt", "best.ckpt", "report.json", "report.csv",
                     "loss_curve.png"):
            assert (run / name).exists(), name
        report = json.loads((run / "report.json").read_text())
        assert report["model_variant"] == "tpgn"
        assert len(report["epochs"]) == 2
        for entry in report["epochs"]:
            assert set(entry) == {"epoch", "mean_loss", "wallclock"}
        assert (run / "loss_curve.png").stat().st_size > 0
        assert (run / "report.csv").read_text().splitlines()[0] == \
            "epoch,mean_loss,wallclock"

    def test_lr_zero_flat_loss(self, pipeline, tmp_path):
        run = tmp_path / "flat"
        assert cli.main(["train", "--triples", str(pipeline["prep"] / "triples.jsonl"),
                         "--vocab", str(pipeline["prep"] / "vocab.txt"),
                         "--topic-model", str(pipeline["lda"]),
                         "--out-dir", str(run), "--embed-dim", "8",
                         "--hidden-dim", "10", "--epochs", "3", "--lr", "0.0"]) == 0
        report = json.loads((run / "report.json").read_text())
        losses = [e["mean_loss"] for e in report["epochs"]]
        assert max(losses) - min(losses) < 1e-12

    @pytest.mark.parametrize("flags,variant", [
        (["--no-keyword-attn", "--no-topic-attn", "--no-pointer"], "seq2seq-attn"),
        (["--no-keyword-attn", "--no-topic-attn"], "pointer-generator"),
        (["--no-topic-attn"], "keyword-level-tpgn"),
        (["--no-keyword-attn"], "topic-level-tpgn"),
    ])
    def test_ablation_flags_select_variants(self, pipeline, tmp_path, flags, variant):
        run = tmp_path / variant
        assert cli.main(["train", "--triples", str(pipeline["prep"] / "triples.jsonl"),
                         "--vocab", str(pipeline["prep"] / "vocab.txt"),
                         "--topic-model", str(pipeline["lda"]),
                         "--out-dir", str(run), "--embed-dim", "6",
                         "--hidden-dim", "8", "--epochs", "1"] + flags) == 0
        report = json.loads((run / "report.json").read_text())
        assert report["model_variant"] == variant


class TestGenerate:
    def test_candidates_schema(self, pipeline):
        rows = [json.loads(l) for l in
                pipeline["candidates"].read_text().splitlines()]
        assert rows
        for row in rows:
            assert set(row) == {"article_id", "sentence_index", "keywords", "comment"}

    def test_rerun_byte_identical(self, pipeline, tmp_path):
        again = tmp_path / "cands.jsonl"
        assert cli.main(["generate", "--checkpoint", str(pipeline["run"] / "best.ckpt"),
                         "--dataset", str(pipeline["dataset"]),
                         "--vocab", str(pipeline["prep"] / "vocab.txt"),
                         "--topic-model", str(pipeline["lda"]), "--out", str(again),
                         "--embed-dim", "8", "--hidden-dim", "10", "--max-len", "6",
                         "--keywords-per-sentence", "1"]) == 0
        assert again.read_bytes() == pipeline["candidates"].read_bytes()

    def test_dimension_mismatch_exit_4(self, pipeline, tmp_path, capsys):
        assert cli.main(["generate", "--checkpoint", str(pipeline["run"] / "best.ckpt"),
                         "--dataset", str(pipeline["dataset"]),
                         "--vocab", str(pipeline["prep"] / "vocab.txt"),
                         "--topic-model", str(pipeline["lda"]),
                         "--out", str(tmp_path / "c.jsonl"),
                         "--embed-dim", "8", "--hidden-dim", "12"]) == 4
        assert "ShapeMismatch" in capsys.readouterr().err

    def test_threads_env_same_output(self, pipeline, tmp_path, monkeypatch):
        monkeypatch.setenv("TPGN_THREADS", "3")
        again = tmp_path / "threaded.jsonl"
        assert cli.main(["generate", "--checkpoint", str(pipeline["run"] / "best.ckpt"),
                         "--dataset", str(pipeline["dataset"]),
                         "--vocab", str(pipeline["prep"] / "vocab.txt"),
                         "--topic-model", str(pipeline["lda"]), "--out", str(again),
                         "--embed-dim", "8", "--hidden-dim", "10", "--max-len", "6",
                         "--keywords-per-sentence", "1"]) == 0
        assert again.read_bytes() == pipeline["candidates"].read_bytes()


class TestEvaluate:
    def test_identity_scores_100(self, pipeline, tmp_path, capsys):
        # use the references themselves as candidates
        refs_rows = [json.loads(l) for l in
                     pipeline["dataset"].read_text().splitlines()]
        cand_path = tmp_path / "ideal.jsonl"
        with open(cand_path, "w") as fh:
            for row in refs_rows:
                for i, comment in enumerate(row["comments"]):
                    fh.write(json.dumps({"article_id": row["id"], "sentence_index": i,
                                         "keywords": [], "comment": comment}) + "\n")
        out = tmp_path / "eval"
        assert cli.main(["evaluate", "--candidates", str(cand_path),
                         "--references", str(pipeline["dataset"]),
                         "--out-dir", str(out), "--top-n", "1"]) == 0
        scores = json.loads((out / "scores.json").read_text())
        assert abs(scores["scores"]["rouge_l"]["1"] - 100.0) < 1e-9
        assert abs(scores["scores"]["bleu_1"]["1"] - 100.0) < 1e-9

    def test_three_n_rows(self, pipeline):
        scores = json.loads((pipeline["eval"] / "scores.json").read_text())
        assert scores["n_values"] == [1, 3, 5]
        for metric in ("rouge_l", "bleu_1", "cider_d"):
            assert set(scores["scores"][metric]) == {"1", "3", "5"}
        csv_lines = (pipeline["eval"] / "scores.csv").read_text().splitlines()
        assert csv_lines[0] == "metric,top_n,score"
        assert (pipeline["eval"] / "scores.png").stat().st_size > 0

    def test_mismatched_ids_exit_2(self, pipeline, tmp_path, capsys):
        cand_path = tmp_path / "bad.jsonl"
        cand_path.write_text(json.dumps({"article_id": "ghost", "sentence_index": 0,
                                         "keywords": [], "comment": "x"}) + "\n")
        assert cli.main(["evaluate", "--candidates", str(cand_path),
                         "--references", str(pipeline["dataset"]),
                         "--out-dir", str(tmp_path / "e")]) == 2
        assert "mismatch" in capsys.readouterr().err


class TestConfigFile:
    def test_file_values_used_and_flags_override(self, pipeline, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text(
            "# pipeline settings\n"
            f"dataset = {pipeline['dataset']}\n"
            "vocab-cap = 200\n"
            "seed = 3\n")
        out = tmp_path / "prep_from_config"
        assert cli.main(["prep", "--config", str(config),
                         "--out-dir", str(out)]) == 0
        assert (out / "vocab.txt").read_bytes() == \
            (pipeline["prep"] / "vocab.txt").read_bytes()

    def test_unknown_key_rejected(self, pipeline, tmp_path, capsys):
        config = tmp_path / "bad.conf"
        config.write_text("definitely-not-a-key = 1\n")
        assert cli.main(["prep", "--config", str(config),
                         "--dataset", str(pipeline["dataset"]),
                         "--out-dir", str(tmp_path / "x")]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_underscores_normalized(self, pipeline, tmp_path):
        config = tmp_path / "u.conf"
        config.write_text("vocab_cap = 200\n")
        out = tmp_path / "prep_u"
        assert cli.main(["prep", "--config", str(config),
                         "--dataset", str(pipeline["dataset"]),
                         "--out-dir", str(out), "--seed", "3"]) == 0
        assert (out / "vocab.txt").exists()


class TestExitCodes:
    def test_non_finite_loss_exit_3(self, pipeline, tmp_path, monkeypatch, capsys):
        from tpgn.errors import NonFiniteLossError
        from tpgn import training as training_mod

        def explode(*args, **kwargs):
            raise NonFiniteLossError("loss diverged")

        monkeypatch.setattr(training_mod, "train", explode)
        code = cli.main(["train", "--triples", str(pipeline["prep"] / "triples.jsonl"),
                         "--vocab", str(pipeline["prep"] / "vocab.txt"),
                         "--topic-model", str(pipeline["lda"]),
                         "--out-dir", str(tmp_path / "r"), "--embed-dim", "6",
                         "--hidden-dim", "8", "--epochs", "1"])
        assert code == 3
        assert "NonFiniteLossError" in capsys.readouterr().err
