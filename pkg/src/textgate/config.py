"""Experiment configuration: one flat record drives model, data and training."""

import dataclasses
import json
from dataclasses import dataclass, field

GATE_KINDS = ("none", "add", "dot", "concat")
PREV_MODES = ("normal", "none", "random")
SUPERVISION_MODES = ("weak", "word-frequency", "root")


@dataclass
class ExperimentConfig:
    # model dimensions
    feat_dim: int = 64            # encoder feature size entering attention
    hidden_dim: int = 64          # decoder GRU state size
    embed_dim: int = 32           # previous-prediction embedding size
    attn_units: int = 64
    gate_units: int = 64
    max_steps: int = 25           # decoding step budget, incl. the EOS step
    conv_channels: tuple = (16, 32, 64)
    conv_strides: tuple = ((2, 2), (2, 2), (2, 1))   # (height, width) per block
    rnn_hidden: int = 32          # per direction; a layer outputs 2x this
    rnn_layers: int = 2

    # architecture variants
    gate: str = "add"             # none | add | dot | concat
    gate_clamp_one: bool = False  # debug: force every gate score to exactly 1
    prev_mode: str = "normal"     # normal | none | random
    supervision: str = "root"     # weak | word-frequency | root
    gate_loss_weight: float = 1.0
    train_feed: str = "ground-truth"  # or "prediction": feed own argmax while training
    wf_matrix_norm: str = "row"   # word-frequency normalization: row | global-max

    # optimizer
    learning_rate: float = 1.0
    lr_decay_step: int = 0        # 0 = never decay
    lr_decayed: float = 0.01
    rho: float = 0.95
    epsilon: float = 1e-6

    # data
    dictionary_path: str = ""     # empty = bundled list
    roots_path: str = ""
    mix_random: float = 0.5       # fraction of meaningless random strings
    random_len_lo: int = 3
    random_len_hi: int = 8
    test_words: int = 500
    fg_jitter: float = 0.35
    offset_x: int = 8
    offset_y: int = 5
    bg_noise: float = 0.35
    pixel_flip: float = 0.16
    count_root_overlaps: bool = True
    train_noise_kind: str = ""    # optional training-time perturbation, off by default
    train_noise_level: float = 0.0

    # run
    batch_size: int = 64
    iterations: int = 20000
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 2000

    # robustness sweep grids
    blur_levels: tuple = (0.0, 0.5, 1.0, 1.5, 2.0)
    salt_pepper_levels: tuple = (0.0, 0.05, 0.1, 0.15, 0.2)
    occlusion_levels: tuple = (0.0, 0.1, 0.2, 0.3)

    def validate(self):
        if self.gate not in GATE_KINDS:
            raise ValueError(f"gate must be one of {GATE_KINDS}, got {self.gate!r}")
        if self.prev_mode not in PREV_MODES:
            raise ValueError(f"prev_mode must be one of {PREV_MODES}, got {self.prev_mode!r}")
        if self.supervision not in SUPERVISION_MODES:
            raise ValueError(f"supervision must be one of {SUPERVISION_MODES}, "
                             f"got {self.supervision!r}")
        if self.prev_mode == "none" and self.gate != "none":
            raise ValueError("prev_mode 'none' removes the embedding the gate scales; "
                             "set gate to 'none'")
        if self.gate_loss_weight < 0:
            raise ValueError("gate_loss_weight must be >= 0")
        if self.train_feed not in ("ground-truth", "prediction"):
            raise ValueError(f"train_feed must be 'ground-truth' or 'prediction', "
                             f"got {self.train_feed!r}")
        if self.wf_matrix_norm not in ("row", "global-max"):
            raise ValueError(f"wf_matrix_norm must be 'row' or 'global-max', "
                             f"got {self.wf_matrix_norm!r}")
        if self.train_noise_kind and self.train_noise_kind not in (
                "gaussian-blur", "salt-pepper", "occlusion"):
            raise ValueError(f"unknown train_noise_kind {self.train_noise_kind!r}")
        for name in ("feat_dim", "hidden_dim", "embed_dim", "attn_units", "gate_units",
                     "max_steps", "rnn_hidden", "rnn_layers", "batch_size", "iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if len(self.conv_channels) != len(self.conv_strides):
            raise ValueError("conv_channels and conv_strides must have equal length")
        if not 0.0 <= self.mix_random <= 1.0:
            raise ValueError("mix_random must be in [0, 1]")
        if not 1 <= self.random_len_lo <= self.random_len_hi:
            raise ValueError("random string length range is invalid")
        if 2 * self.rnn_hidden != self.feat_dim:
            raise ValueError(f"feat_dim ({self.feat_dim}) must equal twice rnn_hidden "
                             f"({self.rnn_hidden}): a bidirectional layer concatenates "
                             "the two directions")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["conv_strides"] = [list(s) for s in self.conv_strides]
        for k in ("blur_levels", "salt_pepper_levels", "occlusion_levels"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        if "conv_strides" in d:
            d["conv_strides"] = tuple(tuple(s) for s in d["conv_strides"])
        for k in ("blur_levels", "salt_pepper_levels", "occlusion_levels"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d).validate()

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def updated(self, **overrides):
        return dataclasses.replace(self, **overrides).validate()

    def learning_rate_at(self, step):
        if self.lr_decay_step and step >= self.lr_decay_step:
            return self.lr_decayed
        return self.learning_rate
