import math
import os

import numpy as np
import pytest

from textgate import harness
from textgate.config import ExperimentConfig
from textgate.harness import (TrainingData, TrainingDiverged, ablate, arm_config,
                              ensure_trained, evaluate, load_model, run_key,
                              robustness_sweep, summarize_arms, train)
from textgate.reports import read_records_csv

from conftest import small_config


def tiny_run_cfg(**over):
    base = dict(iterations=12, log_every=4, checkpoint_every=8, test_words=4,
                batch_size=3, mix_random=0.4)
    base.update(over)
    return small_config(**base)


class TestTrain:
    def test_train_writes_artifacts(self, tmp_path):
        cfg = tiny_run_cfg()
        result = train(cfg, out_dir=str(tmp_path / "run"))
        assert result.steps == 12
        assert os.path.exists(result.checkpoint_path)
        assert os.path.exists(tmp_path / "run" / "ckpt_step8.bin")
        assert os.path.exists(tmp_path / "run" / "metrics.csv")
        assert os.path.exists(tmp_path / "run" / "config.json")
        assert len(result.metrics) == 4  # steps 1, 4, 8, 12

    def test_identical_seeds_bit_identical_outputs(self, tmp_path):
        cfg = tiny_run_cfg()
        train(cfg, out_dir=str(tmp_path / "a"))
        train(cfg, out_dir=str(tmp_path / "b"))
        for name in ("checkpoint.bin", "metrics.csv"):
            ba = (tmp_path / "a" / name).read_bytes()
            bb = (tmp_path / "b" / name).read_bytes()
            assert ba == bb, name

    def test_different_seed_changes_checkpoint(self, tmp_path):
        train(tiny_run_cfg(seed=0), out_dir=str(tmp_path / "a"))
        train(tiny_run_cfg(seed=1), out_dir=str(tmp_path / "b"))
        assert (tmp_path / "a" / "checkpoint.bin").read_bytes() != \
               (tmp_path / "b" / "checkpoint.bin").read_bytes()

    def test_clamped_gate_with_zero_weight_matches_baseline_trajectory(self):
        base = tiny_run_cfg(gate="none", gate_loss_weight=0.0)
        clamp = tiny_run_cfg(gate="add", gate_clamp_one=True, gate_loss_weight=0.0)
        r1 = train(base)
        r2 = train(clamp)
        assert [m["loss"] for m in r1.metrics] == [m["loss"] for m in r2.metrics]

    def test_divergence_aborts_with_diagnostics(self, tmp_path):
        cfg = tiny_run_cfg(learning_rate=1e9, iterations=60,
                           checkpoint_every=2)
        with pytest.raises(TrainingDiverged):
            train(cfg, out_dir=str(tmp_path / "run"))
        # metrics survive the abort for post-mortems
        assert os.path.exists(tmp_path / "run" / "metrics.csv")

    def test_stop_fn_ends_early(self):
        cfg = tiny_run_cfg(iterations=50)
        result = train(cfg, stop_fn=lambda step, model: step >= 5)
        assert result.steps == 5

    def test_train_noise_augmentation_is_deterministic_and_off_by_default(self):
        clean = TrainingData(tiny_run_cfg())
        noisy_cfg = tiny_run_cfg(train_noise_kind="salt-pepper",
                                 train_noise_level=0.2)
        noisy = TrainingData(noisy_cfg)
        b_clean = clean.batch(3)
        b_noisy1 = noisy.batch(3)
        b_noisy2 = TrainingData(noisy_cfg).batch(3)
        assert not np.array_equal(b_clean.images, b_noisy1.images)
        assert np.array_equal(b_noisy1.images, b_noisy2.images)

    def test_word_frequency_norm_flag_changes_targets(self):
        row = TrainingData(tiny_run_cfg(supervision="word-frequency"))
        glob = TrainingData(tiny_run_cfg(supervision="word-frequency",
                                         wf_matrix_norm="global-max"))
        word = row.train_words[0]
        assert not np.array_equal(row.labeler(word), glob.labeler(word)) or \
            row.labeler(word).max() == 0


@pytest.fixture(scope="module")
def trained():
    cfg = tiny_run_cfg(gate="add")
    result = train(cfg)
    tdata = TrainingData(cfg)
    return result.model, tdata


class TestEvaluate:
    def test_record_fields(self, trained):
        model, tdata = trained
        report = evaluate(model, tdata.test_set(), arm="tiny", seed=3)
        r = report.record
        assert r.arm == "tiny" and r.seed == 3
        assert r.noise_kind == "none" and r.noise_level == 0.0
        assert 0.0 <= r.seq_accuracy <= 1.0
        assert r.n == 4
        assert len(report.predictions) == 4

    def test_invariants_collected(self, trained):
        model, tdata = trained
        report = evaluate(model, tdata.test_set())
        assert report.alpha_violations == 0
        assert report.alpha_sum_max_err < 1e-6
        assert report.gamma_violations == 0
        assert 0.0 < report.gamma_min <= report.gamma_max < 1.0

    def test_noise_changes_images_but_keeps_record_shape(self, trained):
        model, tdata = trained
        clean = evaluate(model, tdata.test_set(), arm="x")
        noisy = evaluate(model, tdata.test_set(), arm="x",
                         noise=("salt-pepper", 0.15))
        assert noisy.record.noise_kind == "salt-pepper"
        assert noisy.record.noise_level == 0.15
        # zero level must reproduce the clean evaluation exactly
        zero = evaluate(model, tdata.test_set(), arm="x", noise=("salt-pepper", 0.0))
        assert zero.record.seq_accuracy == clean.record.seq_accuracy
        assert zero.predictions == clean.predictions

    def test_lexicon_correction(self, trained):
        model, tdata = trained
        test = tdata.test_set()
        report = evaluate(model, test, lexicon=list(test.words))
        for p in report.predictions:
            assert p in test.words

    def test_accuracy_invariant_to_dataset_ordering(self, trained):
        model, tdata = trained
        test = tdata.test_set()
        rev = harness.TestSet(list(reversed(test.words)), test.images[::-1].copy())
        a = evaluate(model, test, noise=("occlusion", 0.2))
        b = evaluate(model, rev, noise=("occlusion", 0.2))
        assert a.record.seq_accuracy == b.record.seq_accuracy
        assert list(reversed(a.predictions)) == b.predictions

    def test_evaluate_accepts_checkpoint_path(self, tmp_path):
        cfg = tiny_run_cfg()
        result = train(cfg, out_dir=str(tmp_path / "run"))
        tdata = TrainingData(cfg)
        r1 = evaluate(result.model, tdata.test_set()).record
        r2 = evaluate(result.checkpoint_path, tdata.test_set()).record
        assert r1.seq_accuracy == r2.seq_accuracy


class TestArms:
    def test_arm_config_presets(self):
        base = tiny_run_cfg()
        assert arm_config(base, "baseline").gate == "none"
        assert arm_config(base, "no-prev").prev_mode == "none"
        assert arm_config(base, "random-prev").prev_mode == "random"
        assert arm_config(base, "dot").gate == "dot"
        cfg = arm_config(base, "add:word-frequency")
        assert cfg.gate == "add" and cfg.supervision == "word-frequency"
        with pytest.raises(ValueError, match="unknown arm"):
            arm_config(base, "extra")
        with pytest.raises(ValueError, match="no supervision"):
            arm_config(base, "baseline:root")

    def test_run_key_stable_and_sensitive(self):
        a = tiny_run_cfg()
        assert run_key(a) == run_key(tiny_run_cfg())
        assert run_key(a) != run_key(tiny_run_cfg(seed=5))

    def test_ensure_trained_caches(self, tmp_path):
        cfg = tiny_run_cfg()
        d1 = ensure_trained(cfg, str(tmp_path))
        stamp = os.path.getmtime(os.path.join(d1, "checkpoint.bin"))
        d2 = ensure_trained(cfg, str(tmp_path))
        assert d1 == d2
        assert os.path.getmtime(os.path.join(d2, "checkpoint.bin")) == stamp

    def test_ablate_runs_and_sorts(self, tmp_path):
        records, failures = ablate(tiny_run_cfg(), ["add:root", "baseline"],
                                   seeds=[0, 1], out_dir=str(tmp_path))
        assert not failures
        assert [r.arm for r in records] == ["add:root", "add:root",
                                            "baseline", "baseline"]
        assert [r.seed for r in records] == [0, 1, 0, 1]
        loaded = read_records_csv(tmp_path / "ablation.csv")
        assert [r.arm for r in loaded] == [r.arm for r in records]
        text = summarize_arms(records, failures)
        assert "baseline" in text and "add:root" in text

    def test_ablate_marks_failed_arm_and_continues(self, tmp_path, monkeypatch):
        real_train = harness.train

        def sabotaged(cfg, **kw):
            if cfg.gate == "dot":
                raise TrainingDiverged("synthetic failure")
            return real_train(cfg, **kw)

        monkeypatch.setattr(harness, "train", sabotaged)
        records, failures = ablate(tiny_run_cfg(), ["baseline", "dot"], seeds=[0])
        assert ("dot", 0) in failures
        assert [r.arm for r in records] == ["baseline"]
        summary = summarize_arms(records, failures)
        assert "FAILED" in summary


class TestRobustness:
    def test_sweep_outputs(self, tmp_path):
        cfg_b = tiny_run_cfg(gate="none", gate_loss_weight=0.0,
                             blur_levels=(0.0, 1.0), salt_pepper_levels=(0.0, 0.1),
                             occlusion_levels=(0.0, 0.2))
        cfg_g = cfg_b.updated(gate="add", gate_loss_weight=1.0)
        rb = train(cfg_b, out_dir=str(tmp_path / "b"))
        rg = train(cfg_g, out_dir=str(tmp_path / "g"))
        records = robustness_sweep([rb.checkpoint_path], [rg.checkpoint_path],
                                   out_dir=str(tmp_path / "sweep"))
        # 2 sides x 3 kinds x 2 levels
        assert len(records) == 12
        assert os.path.exists(tmp_path / "sweep" / "robustness.csv")
        for kind in ("gaussian-blur", "salt-pepper", "occlusion"):
            svg = tmp_path / "sweep" / f"robustness_{kind}.svg"
            assert svg.exists()
            assert svg.read_text().startswith("<svg")

        # zero-noise rows match a plain clean evaluation
        tdata = TrainingData(cfg_b)
        clean = evaluate(rb.model, tdata.test_set(), arm="baseline",
                         seed=cfg_b.seed).record
        zero_rows = [r for r in records
                     if r.arm == "baseline" and r.noise_level == 0.0]
        assert all(r.seq_accuracy == clean.seq_accuracy for r in zero_rows)
