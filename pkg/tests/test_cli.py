import json

import pytest

from nestembed.cli import main

from conftest import config_text


@pytest.fixture
def run_dir(corpus_dir, tmp_path):
    """Config file plus a completed training run for the eval subcommands."""
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(config_text(corpus_dir, tmp_path / "out"))
    assert main(["train", "--config", str(cfg_path)]) == 0
    return tmp_path


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["eval-nli", "--data", "x.jsonl"])
        assert exc.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["gradcheck", "--bogus"])
        assert exc.value.code == 2


class TestTrainCommand:
    def test_train_prints_artifacts(self, corpus_dir, tmp_path, capsys):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text(config_text(corpus_dir, tmp_path / "out"))
        assert main(["train", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "checkpoint_stage2" in out
        assert "forgetting" in out
        assert (tmp_path / "out" / "stage2.ckpt").exists()

    def test_output_dir_override(self, corpus_dir, tmp_path, capsys):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text(config_text(corpus_dir, tmp_path / "a"))
        code = main(
            ["train", "--config", str(cfg_path), "--output-dir", str(tmp_path / "b")]
        )
        assert code == 0
        assert (tmp_path / "b" / "stage2.ckpt").exists()
        assert not (tmp_path / "a").exists()

    def test_bad_config_exits_1_with_error_line(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("who = knows\n")
        assert main(["train", "--config", str(cfg_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_config_file_exits_1(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "none.cfg")]) == 1
        assert "error:" in capsys.readouterr().err


class TestEvalCommands:
    def test_eval_nli_prints_accuracy_line(self, run_dir, corpus_dir, capsys):
        code = main(
            [
                "eval-nli",
                "--model", str(run_dir / "out" / "stage2.ckpt"),
                "--data", str(corpus_dir / "nli_dev.jsonl"),
                "--dim", "16",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "cosine_accuracy=" in out
        assert "dim=16" in out

    def test_eval_sts_prints_both_correlations(self, run_dir, corpus_dir, capsys):
        code = main(
            [
                "eval-sts",
                "--model", str(run_dir / "out" / "stage2.ckpt"),
                "--data", str(corpus_dir / "sts_dev.jsonl"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "pearson_cosine=" in out and "spearman_cosine=" in out

    def test_missing_model_exits_1(self, corpus_dir, capsys):
        code = main(
            [
                "eval-nli",
                "--model", "no-such.ckpt",
                "--data", str(corpus_dir / "nli_dev.jsonl"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestSweepCommand:
    def test_table_output(self, run_dir, corpus_dir, capsys):
        code = main(
            [
                "sweep",
                "--model", str(run_dir / "out" / "stage2.ckpt"),
                "--data", str(corpus_dir / "nli_dev.jsonl"),
                "--task", "nli",
                "--dims", "4,8",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "Cosine Accuracy" in out
        assert "Embedding Dimension" in out

    def test_jsonl_output(self, run_dir, corpus_dir, capsys):
        code = main(
            [
                "sweep",
                "--model", str(run_dir / "out" / "stage2.ckpt"),
                "--data", str(corpus_dir / "sts_dev.jsonl"),
                "--task", "sts",
                "--dims", "4",
                "--jsonl",
            ]
        )
        assert code == 0
        rows = [json.loads(l) for l in capsys.readouterr().out.strip().split("\n")]
        assert {r["embedding_dimension"] for r in rows} == {4, 16}


class TestBenchCommand:
    def test_bench_prints_rate(self, run_dir, tmp_path, capsys):
        texts = tmp_path / "texts.txt"
        texts.write_text("\n".join("f0 t00a t01b" for _ in range(40)) + "\n")
        code = main(
            [
                "bench",
                "--model", str(run_dir / "out" / "stage2.ckpt"),
                "--texts", str(texts),
                "--batch-size", "8",
                "--repetitions", "2",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "sentences_per_second=" in out
        assert "n_sentences=40" in out


class TestGradcheckCommand:
    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck", "--instances", "3", "--seed", "2"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "mnrl" in out

    def test_gradcheck_fails_at_absurd_tolerance(self, capsys):
        code = main(
            ["gradcheck", "--instances", "2", "--seed", "2", "--tolerance", "1e-18"]
        )
        assert code == 1
        assert "FAIL" in capsys.readouterr().out
