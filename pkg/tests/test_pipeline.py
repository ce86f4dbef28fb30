import json
from pathlib import Path

import numpy as np
import pytest

from nestembed import pipeline
from nestembed.encoder import build_tokenizer, init_model, load_checkpoint
from nestembed.losses import MatryoshkaSpec
from nestembed.pipeline import (
    ConfigError,
    OutputDirLockedError,
    PipelineError,
    StageConfig,
    bench_throughput,
    load_config,
    parse_config,
    run_two_stage,
    serialize_config,
    train_stage,
)
from nestembed.synthetic import make_nli_split, make_sts_split

from conftest import config_text


def minimal_config(tmp="o"):
    return config_text(Path("d"), Path(tmp))


class TestConfigParsing:
    def test_defaults_applied(self):
        cfg = parse_config(minimal_config())
        assert cfg.seed == 42
        assert cfg.encoder_dim == 16
        assert cfg.stage1.batch_size == 8
        assert cfg.stage1.peak_lr == 1e-2
        assert cfg.stage1.warmup_ratio == 0.1
        assert cfg.stage2.scale == 20.0
        assert cfg.matryoshka.dims == (4, 8, 16)
        assert cfg.matryoshka.weights == (1.0, 1.0, 1.0)

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="output_dir"):
            parse_config("seed = 1\n")
        with pytest.raises(ConfigError, match="stage2"):
            parse_config(
                "output_dir = o\nstage1.nli_train_path = a\nstage1.nli_dev_path = b\n"
            )

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config(minimal_config() + "stage3.lr = 5\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(minimal_config() + "seed = 7\nseed = 8\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="stage1.batch_size"):
            parse_config(minimal_config() + "stage1.batch_size = two\n")
        with pytest.raises(ConfigError, match="boolean"):
            parse_config(minimal_config() + "stage1.select_best = maybe\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config("# comment\n\n" + minimal_config())
        assert cfg.seed == 42

    def test_validation_of_ranges(self):
        with pytest.raises(ConfigError):
            parse_config(minimal_config() + "stage1.epochs = 0\n")
        with pytest.raises(ConfigError):
            parse_config(minimal_config() + "stage2.warmup_ratio = 1.5\n")
        with pytest.raises(ConfigError, match="exceeds"):
            parse_config(config_text(Path("d"), Path("o"), **{"encoder.dim": 8}))

    def test_round_trip(self):
        text = minimal_config() + "stage1.peak_lr = 0.007\nmatryoshka.weights = 1,0.5,2\n"
        cfg = parse_config(text)
        again = parse_config(serialize_config(cfg))
        assert again == cfg
        assert again.stage1.peak_lr == 0.007


class TestTrainStage:
    def make_inputs(self, n=40, epochs=2):
        split = make_nli_split(n, 5, "train")
        texts = [t for r in split.records for t in (r.anchor, r.positive, r.negative)]
        tok = build_tokenizer(texts, 32)
        model = init_model(tok, 8, seed=3)
        stage = StageConfig(train_path="-", dev_path="-", epochs=epochs)
        return model, split, stage

    def test_deterministic_given_seed(self):
        out = []
        for _ in range(2):
            model, split, stage = self.make_inputs()
            model, trace = train_stage(
                model, split, "mnrl", MatryoshkaSpec(dims=(4, 8)), stage, seed=9
            )
            out.append((model.embedding_table.copy(), trace["step_losses"]))
        np.testing.assert_array_equal(out[0][0], out[1][0])
        assert out[0][1] == out[1][1]

    def test_loss_decreases_on_separable_corpus(self):
        model, split, stage = self.make_inputs(n=80, epochs=5)
        _, trace = train_stage(
            model, split, "mnrl", MatryoshkaSpec(dims=(4, 8)), stage, seed=1
        )
        assert trace["epoch_mean_loss"][-1] < trace["epoch_mean_loss"][0]

    def test_kind_mismatch(self):
        model, _, stage = self.make_inputs()
        sts = make_sts_split(10, 2, "train")
        with pytest.raises(PipelineError, match="mnrl"):
            train_stage(model, sts, "mnrl", MatryoshkaSpec(dims=(4,)), stage, seed=1)

    def test_unknown_loss_kind(self):
        model, split, stage = self.make_inputs()
        with pytest.raises(PipelineError, match="unknown loss"):
            train_stage(model, split, "mse", MatryoshkaSpec(dims=(4,)), stage, seed=1)

    def test_zero_effective_steps_rejected(self):
        # a single-triplet split with a larger batch size drops its only
        # (singleton) batch, leaving nothing to train on
        single = make_nli_split(1, 4, "train")
        texts = [single.records[0].anchor, single.records[0].positive]
        model = init_model(build_tokenizer(texts, 16), 4, seed=0)
        stage = StageConfig(train_path="-", dev_path="-", batch_size=4)
        with pytest.raises(PipelineError, match="no training steps"):
            train_stage(model, single, "mnrl", MatryoshkaSpec(dims=(4,)), stage, seed=1)

    def test_cosent_stage_runs(self):
        sts = make_sts_split(30, 6, "train")
        texts = [t for r in sts.records for t in (r.sentence1, r.sentence2)]
        tok = build_tokenizer(texts, 32)
        model = init_model(tok, 8, seed=3)
        stage = StageConfig(train_path="-", dev_path="-", epochs=2)
        _, trace = train_stage(
            model, sts, "cosent", MatryoshkaSpec(dims=(4, 8)), stage, seed=1
        )
        assert len(trace["step_losses"]) == trace["steps"]

    def test_select_best_restores_best_epoch(self):
        model, split, stage = self.make_inputs(n=40, epochs=3)
        dev = make_nli_split(20, 6, "dev")
        stage = StageConfig(
            train_path="-", dev_path="-", epochs=3, select_best=True
        )
        model, trace = train_stage(
            model, split, "mnrl", MatryoshkaSpec(dims=(4, 8)), stage, seed=9,
            dev_split=dev,
        )
        from nestembed.evaluation import triplet_eval

        final_metric = triplet_eval(model, dev, model.dim)
        assert final_metric == max(trace["dev_metric"])


class TestRunTwoStage:
    def run(self, corpus_dir, tmp_path, name="out", **overrides):
        cfg = parse_config(config_text(corpus_dir, tmp_path / name, **overrides))
        return cfg, run_two_stage(cfg)

    def test_artifact_bundle_contract(self, corpus_dir, tmp_path):
        cfg, art = self.run(corpus_dir, tmp_path)
        out = Path(art.output_dir)
        assert (out / "stage1.ckpt").exists()
        assert (out / "stage2.ckpt").exists()
        assert (out / "sweep_nli.jsonl").exists()
        assert (out / "sweep_nli.txt").exists()
        assert (out / "sweep_sts.jsonl").exists()
        assert (out / "sweep_sts.txt").exists()
        assert (out / "forgetting.json").exists()
        assert (out / "config.cfg").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "complete"
        assert not (out / ".lock").exists()
        # sweeps cover the configured dims plus full D
        assert sorted(art.sweep_nli.per_dim) == [4, 8, 16]
        assert art.forgetting.delta == art.forgetting.metric_after - art.forgetting.metric_before

    def test_checkpoints_load_and_share_vocab(self, corpus_dir, tmp_path):
        _, art = self.run(corpus_dir, tmp_path)
        m1 = load_checkpoint(art.checkpoint_stage1)
        m2 = load_checkpoint(art.checkpoint_stage2)
        assert m1.tokenizer == m2.tokenizer
        assert m1.dim == m2.dim == 16

    def test_determinism_bitwise(self, corpus_dir, tmp_path):
        _, a = self.run(corpus_dir, tmp_path, name="run_a")
        _, b = self.run(corpus_dir, tmp_path, name="run_b")
        for attr in ("checkpoint_stage1", "checkpoint_stage2"):
            assert Path(getattr(a, attr)).read_bytes() == Path(
                getattr(b, attr)
            ).read_bytes()

    def test_echoed_config_reproduces_run(self, corpus_dir, tmp_path):
        cfg, art = self.run(corpus_dir, tmp_path, name="orig")
        echoed = load_config(Path(art.output_dir) / "config.cfg")
        rerun_cfg = pipeline.RunConfig(
            stage1=echoed.stage1,
            stage2=echoed.stage2,
            output_dir=str(tmp_path / "rerun"),
            seed=echoed.seed,
            encoder_dim=echoed.encoder_dim,
            max_seq_length=echoed.max_seq_length,
            matryoshka=echoed.matryoshka,
        )
        art2 = run_two_stage(rerun_cfg)
        assert Path(art.checkpoint_stage2).read_bytes() == Path(
            art2.checkpoint_stage2
        ).read_bytes()

    def test_eager_validation_before_training(self, corpus_dir, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("", encoding="utf-8")
        cfg = parse_config(
            config_text(
                corpus_dir, tmp_path / "out", **{"stage2.sts_train_path": str(bad)}
            )
        )
        with pytest.raises(Exception, match="empty"):
            run_two_stage(cfg)
        # stage 1 never ran
        assert not (tmp_path / "out" / "stage1.ckpt").exists()

    def test_locked_output_dir(self, corpus_dir, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / ".lock").touch()
        cfg = parse_config(config_text(corpus_dir, out))
        with pytest.raises(OutputDirLockedError):
            run_two_stage(cfg)

    def test_stage2_failure_leaves_stage1_artifacts(
        self, corpus_dir, tmp_path, monkeypatch
    ):
        real = pipeline.train_stage

        def boom(model, split, loss_kind, *args, **kwargs):
            if loss_kind == pipeline.LOSS_COSENT:
                raise RuntimeError("synthetic stage-2 crash")
            return real(model, split, loss_kind, *args, **kwargs)

        monkeypatch.setattr(pipeline, "train_stage", boom)
        cfg = parse_config(config_text(corpus_dir, tmp_path / "out"))
        with pytest.raises(PipelineError, match="stage2"):
            run_two_stage(cfg)
        out = tmp_path / "out"
        model = load_checkpoint(out / "stage1.ckpt")  # loadable, evaluable
        assert model.dim == 16
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "failed"
        assert manifest["failed_stage"] == "stage2"
        assert not (out / ".lock").exists()


class TestBench:
    def make_model(self):
        split = make_nli_split(20, 3, "t")
        texts = [r.anchor for r in split.records]
        tok = build_tokenizer(texts, 32)
        return init_model(tok, 8, seed=1), texts

    def test_rate_is_count_over_wall(self):
        model, texts = self.make_model()
        res = bench_throughput(model, texts, batch_size=4, repetitions=2)
        assert res.n_sentences == len(texts)
        assert res.sentences_per_second == pytest.approx(
            res.n_sentences / res.wall_seconds, rel=1e-9
        )
        assert res.batch_size == 4

    def test_repetitions_do_not_change_count(self):
        model, texts = self.make_model()
        a = bench_throughput(model, texts, batch_size=4, repetitions=1)
        b = bench_throughput(model, texts, batch_size=4, repetitions=3)
        assert a.n_sentences == b.n_sentences

    def test_validation(self):
        model, texts = self.make_model()
        with pytest.raises(ValueError):
            bench_throughput(model, [], batch_size=4)
        with pytest.raises(ValueError):
            bench_throughput(model, texts, batch_size=0)
        with pytest.raises(ValueError):
            bench_throughput(model, texts, batch_size=4, repetitions=0)
