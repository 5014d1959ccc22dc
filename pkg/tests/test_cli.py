import json
import os

import numpy as np
import pytest

from textgate import cli
from textgate.config import ExperimentConfig

from conftest import small_config


def run_cli(argv, capsys):
    cli.main(argv)
    return capsys.readouterr().out


def write_tiny_config(tmp_path, **over):
    cfg = small_config(iterations=8, log_every=4, checkpoint_every=4,
                       test_words=3, batch_size=3, **over)
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    return path, cfg


class TestLabel:
    def test_root_mode_prints_matches_and_vector(self, capsys):
        out = run_cli(["label", "--word", "singing", "--mode", "root"], capsys)
        assert "root 'ing' at position 1" in out
        assert "root 'ing' at position 4" in out
        assert "1.0000, 1.0000, 0.0000, 1.0000, 1.0000" in out

    def test_single_character_is_zero_vector(self, capsys):
        out = run_cli(["label", "--word", "a", "--mode", "word-frequency"], capsys)
        assert "gate target: [0.0000]" in out

    def test_digit_only_word_all_zeros(self, capsys):
        out = run_cli(["label", "--word", "2049", "--mode", "word-frequency"],
                      capsys)
        assert "gate target: [0.0000, 0.0000, 0.0000, 0.0000]" in out

    def test_invalid_characters_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["label", "--word", "a-b", "--mode", "root"])
        assert exc.value.code == 2


class TestRender:
    def test_writes_pgm_files(self, tmp_path, capsys):
        out_dir = tmp_path / "imgs"
        run_cli(["render", "--words", "abc,a7z", "--seed", "4",
                 "--out-dir", str(out_dir)], capsys)
        assert (out_dir / "abc_4.pgm").exists()
        assert (out_dir / "a7z_4.pgm").read_bytes().startswith(b"P5\n100 32\n255\n")

    def test_noisy_render(self, tmp_path, capsys):
        out_dir = tmp_path / "imgs"
        run_cli(["render", "--words", "abc", "--seed", "1", "--noise",
                 "salt-pepper:0.2", "--out-dir", str(out_dir)], capsys)
        assert (out_dir / "abc_1.pgm").exists()


class TestGradcheckCmd:
    def test_ops_scope_passes(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["gradcheck", "--scope", "ops"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_corrupted_backward_rule_reported_with_op_name(self, capsys,
                                                           monkeypatch):
        from textgate import autodiff as ad

        real_tanh = ad.tanh

        def bad_tanh(a):
            out = real_tanh(a)
            if ad._active_tape is not None and ad._active_tape.entries:
                outs, inputs, vjp = ad._active_tape.entries[-1]
                if outs[0] is out:
                    ad._active_tape.entries[-1] = (
                        outs, inputs, lambda g: (g * 0.5,))  # wrong rule
            return out

        monkeypatch.setattr(ad, "tanh", bad_tanh)
        with pytest.raises(SystemExit) as exc:
            cli.main(["gradcheck", "--scope", "ops"])
        assert exc.value.code == 1
        out = capsys.readouterr().out
        assert "FAIL  tanh" in out


class TestTrainEvalCycle:
    def test_train_then_eval_and_csv(self, tmp_path, capsys):
        cfg_path, cfg = write_tiny_config(tmp_path)
        run_dir = tmp_path / "run"
        out = run_cli(["train", "--config", str(cfg_path),
                       "--out-dir", str(run_dir)], capsys)
        assert "finished 8 steps" in out
        ckpt = run_dir / "checkpoint.bin"
        assert ckpt.exists()

        out = run_cli(["eval", "--checkpoint", str(ckpt),
                       "--out-dir", str(tmp_path / "eval")], capsys)
        assert "accuracy=" in out
        csv_text = (tmp_path / "eval" / "eval.csv").read_text()
        assert csv_text.startswith("arm,noise_kind,noise_level,seq_accuracy,"
                                   "mean_norm_edit_dist,gate_strong_mean,"
                                   "gate_weak_mean,n,seed")

    def test_eval_with_noise_and_lexicon(self, tmp_path, capsys):
        cfg_path, cfg = write_tiny_config(tmp_path)
        run_dir = tmp_path / "run"
        run_cli(["train", "--config", str(cfg_path), "--out-dir", str(run_dir)],
                capsys)
        lex = tmp_path / "lex.txt"
        lex.write_text("cat\ndog\n", encoding="utf-8")
        out = run_cli(["eval", "--checkpoint", str(run_dir / "checkpoint.bin"),
                       "--noise", "gaussian-blur:0.5", "--lexicon", str(lex)],
                      capsys)
        assert "noise=gaussian-blur@0.5" in out

    def test_seed_override(self, tmp_path, capsys):
        cfg_path, cfg = write_tiny_config(tmp_path)
        run_cli(["train", "--config", str(cfg_path), "--seed", "9",
                 "--out-dir", str(tmp_path / "r9")], capsys)
        saved = json.loads((tmp_path / "r9" / "config.json").read_text())
        assert saved["seed"] == 9

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        d = ExperimentConfig().to_dict()
        d["turbo"] = True
        bad.write_text(json.dumps(d), encoding="utf-8")
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--config", str(bad)])
        assert exc.value.code == 2


class TestAblateRobustnessCmds:
    def test_ablate_cmd(self, tmp_path, capsys):
        cfg_path, cfg = write_tiny_config(tmp_path)
        out = run_cli(["ablate", "--config", str(cfg_path),
                       "--arms", "baseline,add:root", "--seeds", "0",
                       "--out-dir", str(tmp_path / "abl"),
                       "--cache-dir", str(tmp_path / "cache")], capsys)
        assert "mean_acc" in out
        assert (tmp_path / "abl" / "ablation.csv").exists()

    def test_robustness_cmd_with_match_steps(self, tmp_path, capsys):
        cfg_path, cfg = write_tiny_config(
            tmp_path, blur_levels=(0.0, 1.0), salt_pepper_levels=(0.0, 0.1),
            occlusion_levels=(0.0,))
        base_dir = tmp_path / "base"
        gated_dir = tmp_path / "gated"
        run_cli(["train", "--config", str(cfg_path), "--out-dir", str(base_dir)],
                capsys)
        gated_cfg = cfg.updated(gate="add")
        gated_path = tmp_path / "gated.json"
        gated_cfg.to_json(gated_path)
        run_cli(["train", "--config", str(gated_path), "--out-dir",
                 str(gated_dir)], capsys)
        out = run_cli(["robustness", "--baseline", str(base_dir),
                       "--aeg", str(gated_dir), "--match-baseline-steps", "4",
                       "--out-dir", str(tmp_path / "sweep")], capsys)
        assert "robustness.csv" in out
        assert (tmp_path / "sweep" / "robustness_salt-pepper.svg").exists()
