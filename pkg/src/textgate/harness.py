"""Experiment driver: training, evaluation, ablations, robustness sweeps.

Every run is fully determined by its ExperimentConfig: the run seed
derives separate streams for parameter init, the training data, the
train/test split and evaluation-time randomness, so ablation arms that
share a seed consume identical data and differ only architecturally.
"""

import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as dt
from . import supervision as sv
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .metrics import lexicon_correct, normalized_edit_distance, sequence_accuracy
from .model import Recognizer
from .optim import Adadelta, NonFiniteGradient
from .reports import EvalRecord, svg_line_chart, write_records_csv

DIVERGENCE_LIMIT = 1e3
STRONG_TARGET = 0.5     # gate target above this counts as a strong pair
WEAK_TARGET = 0.1       # below this counts as a weak pair


class TrainingDiverged(RuntimeError):
    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


# ---------------------------------------------------------------------------
# data wiring

@dataclass
class TestSet:
    words: list
    images: np.ndarray


class TrainingData:
    """Word split, samplers and labeler for one config."""

    def __init__(self, cfg, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        all_words = sv.load_wordlist(cfg.dictionary_path or None)
        self.roots = sv.load_roots(cfg.roots_path or None)
        limit = min(dt.max_renderable_length(), cfg.max_steps - 1)
        usable = [w for w in all_words if len(w) <= limit]
        if cfg.random_len_hi > limit:
            raise ValueError(f"random_len_hi {cfg.random_len_hi} exceeds the "
                             f"renderable/decodable limit {limit}")
        if len(usable) <= cfg.test_words:
            raise ValueError(f"dictionary too small: {len(usable)} usable words, "
                             f"need more than {cfg.test_words}")
        order = np.random.default_rng(
            dt.content_seed(cfg.seed, "split")).permutation(len(usable))
        self.test_words = [usable[i] for i in order[:cfg.test_words]]
        self.train_words = [usable[i] for i in order[cfg.test_words:]]
        self.sampler = dt.WordSampler(self.train_words, cfg.mix_random,
                                      (cfg.random_len_lo, cfg.random_len_hi))
        if cfg.supervision == "root":
            self.labeler = sv.make_labeler("root", roots=self.roots,
                                           count_overlaps=cfg.count_root_overlaps)
        elif cfg.supervision == "word-frequency":
            self.labeler = sv.make_labeler("word-frequency", dictionary_words=all_words,
                                           matrix_norm=cfg.wf_matrix_norm)
        else:
            self.labeler = None
        # reference labeler for strong/weak bucketing in eval records
        self.reference_labeler = self.labeler or sv.make_labeler("root", roots=self.roots)
        self.template = dt.RenderSpec("", 0, cfg.fg_jitter, cfg.offset_x,
                                      cfg.offset_y, cfg.bg_noise, cfg.pixel_flip)
        self.stream_seed = dt.content_seed(cfg.seed, "data")
        self.test_render_seed = dt.content_seed(cfg.seed, "test-render")

    def batch(self, step):
        batch = dt.sample_batch(self.sampler, self.labeler, self.template,
                                self.cfg.batch_size, self.stream_seed, step,
                                dtype=self.dtype)
        if self.cfg.train_noise_kind:
            for i in range(len(batch.words)):
                noisy = dt.perturb(batch.images[i].astype(np.float64),
                                   self.cfg.train_noise_kind,
                                   self.cfg.train_noise_level,
                                   dt.content_seed(self.stream_seed, "train-noise",
                                                   step, i))
                batch.images[i] = noisy.astype(self.dtype)
        return batch

    def test_set(self):
        images = dt.render_test_set(self.test_words, self.template,
                                    self.test_render_seed, dtype=self.dtype)
        return TestSet(self.test_words, images)


# ---------------------------------------------------------------------------
# checkpoint plumbing

def save_run_checkpoint(path, model, optimizer, step):
    arrays = {name: t.data for name, t in model.params.items()}
    arrays.update(optimizer.state_arrays())
    metadata = {"config": model.cfg.to_dict(), "step": int(step),
                "dtype": str(model.dtype)}
    save_checkpoint(path, arrays, metadata)


def load_model(path, dtype=np.float32):
    """Rebuild a Recognizer from a checkpoint file. Returns (model, ckpt)."""
    ckpt = load_checkpoint(path)
    cfg = ExperimentConfig.from_dict(ckpt.config_dict)
    model = Recognizer(cfg, init_seed=dt.content_seed(cfg.seed, "init"), dtype=dtype)
    model.load_params(ckpt.model_arrays())
    return model, ckpt


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    model: Recognizer
    optimizer: Adadelta
    config: ExperimentConfig
    steps: int
    metrics: list = field(default_factory=list)
    out_dir: str = ""
    checkpoint_path: str = ""


def _write_metrics_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("step,loss,attn_loss,gate_loss,lr\r\n")
        for r in rows:
            gate = "" if r["gate_loss"] is None else repr(r["gate_loss"])
            f.write(f"{r['step']},{r['loss']!r},{r['attn_loss']!r},{gate},"
                    f"{r['lr']!r}\r\n")


def train(cfg, out_dir=None, log=None, stop_fn=None):
    """Run the teacher-forced training loop to the configured budget.

    Writes periodic checkpoints and a metrics CSV when ``out_dir`` is
    given. ``stop_fn(step, model) -> bool`` may end the run early (used
    by convergence experiments); checkpoints and metrics stay valid.
    Aborts with TrainingDiverged on a NaN or exploding loss, keeping
    the last periodic checkpoint.
    """
    cfg = cfg.validate()
    log = log or (lambda msg: None)
    tdata = TrainingData(cfg)
    model = Recognizer(cfg, init_seed=dt.content_seed(cfg.seed, "init"))
    optimizer = Adadelta(model.params, rho=cfg.rho, eps=cfg.epsilon)
    prev_rng = None
    if cfg.prev_mode == "random":
        prev_rng = np.random.default_rng(dt.content_seed(cfg.seed, "prev-random"))

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        cfg.to_json(os.path.join(out_dir, "config.json"))
    rows = []
    last_ckpt = None
    t_start = time.perf_counter()
    step = 0
    try:
        for step in range(1, cfg.iterations + 1):
            batch = tdata.batch(step)
            with ad.Tape() as tape:
                result = model.forced_loss(batch, prev_rng=prev_rng)
            loss = result.total.item()
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {step}", last_ckpt)
            if loss > DIVERGENCE_LIMIT:
                raise TrainingDiverged(
                    f"loss {loss:.1f} exceeded {DIVERGENCE_LIMIT:g} at step {step}",
                    last_ckpt)
            tape.backward(result.total)
            try:
                optimizer.step(cfg.learning_rate_at(step))
            except NonFiniteGradient as e:
                raise TrainingDiverged(f"{e} at step {step}", last_ckpt) from e
            optimizer.zero_grad()

            if step % cfg.log_every == 0 or step == 1:
                row = {"step": step, "loss": loss,
                       "attn_loss": result.attn.item(),
                       "gate_loss": result.gate.item() if result.gate is not None else None,
                       "lr": cfg.learning_rate_at(step)}
                rows.append(row)
                rate = step / (time.perf_counter() - t_start)
                log(f"step {step}/{cfg.iterations} loss {loss:.4f} "
                    f"({rate:.1f} it/s)")
            if out_dir and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                last_ckpt = os.path.join(out_dir, f"ckpt_step{step}.bin")
                save_run_checkpoint(last_ckpt, model, optimizer, step)
            if stop_fn is not None and stop_fn(step, model):
                log(f"stop condition met at step {step}")
                break
    finally:
        if out_dir:
            _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)

    final_path = ""
    if out_dir:
        final_path = os.path.join(out_dir, "checkpoint.bin")
        save_run_checkpoint(final_path, model, optimizer, step)
    return TrainResult(model=model, optimizer=optimizer, config=cfg, steps=step,
                       metrics=rows, out_dir=out_dir or "", checkpoint_path=final_path)


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalReport:
    record: EvalRecord
    predictions: list
    alpha_sum_max_err: float = 0.0
    alpha_violations: int = 0
    gamma_violations: int = 0
    gamma_min: float = math.nan
    gamma_max: float = math.nan


def _perturbed_images(test, noise, seed, dtype):
    kind, level = noise
    out = np.empty_like(test.images)
    for i, word in enumerate(test.words):
        pix = dt.perturb(test.images[i].astype(np.float64), kind, level,
                         dt.content_seed(seed, "noise", kind, float(level), word))
        out[i] = pix.astype(dtype)
    return out


def evaluate(model, test, arm="model", seed=None, noise=None, lexicon=None,
             reference_labeler=None):
    """Greedy-decode a test set and compute one EvalRecord.

    ``noise`` is an optional (kind, level) pair applied per image with
    content-keyed seeds; ``lexicon`` replaces each prediction with the
    nearest word by edit distance before scoring. Gate statistics come
    from a separate teacher-forced pass bucketed by ``reference_labeler``
    (falling back to the bundled root table).
    """
    if isinstance(model, (str, os.PathLike)):
        model, _ = load_model(model)
    cfg = model.cfg
    seed = cfg.seed if seed is None else seed
    images = test.images
    if noise is not None and noise[1] != 0:
        images = _perturbed_images(test, noise, seed, model.dtype)

    bsz = cfg.batch_size
    preds = []
    alpha_err = 0.0
    alpha_bad = 0
    g_min, g_max = math.inf, -math.inf
    g_bad = 0
    for lo in range(0, len(test.words), bsz):
        chunk = images[lo:lo + bsz]
        prev_rng = None
        if cfg.prev_mode == "random":
            prev_rng = np.random.default_rng(
                dt.content_seed(seed, "eval-prev", lo))
        words, alphas, _, scores = model.recognize(chunk, prev_rng=prev_rng)
        preds.extend(words)
        for a in alphas:
            sums = a.sum(axis=-1)
            alpha_err = max(alpha_err, float(np.max(np.abs(sums - 1.0))))
            alpha_bad += int(np.sum(np.abs(sums - 1.0) >= 1e-6))
            alpha_bad += int(np.sum(a < 0))
        for s in scores:
            if s.size:
                g_min = min(g_min, float(s.min()))
                g_max = max(g_max, float(s.max()))
                g_bad += int(np.sum((s <= 0.0) | (s >= 1.0)))

    if lexicon:
        preds = [lexicon_correct(p, lexicon) for p in preds]
    accuracy = sequence_accuracy(preds, test.words)
    mean_ned = float(np.mean([normalized_edit_distance(p, w)
                              for p, w in zip(preds, test.words)]))

    strong_mean, weak_mean = _gate_statistics(model, test, images, reference_labeler)
    record = EvalRecord(arm=arm,
                        noise_kind=noise[0] if noise else "none",
                        noise_level=float(noise[1]) if noise else 0.0,
                        seq_accuracy=accuracy, mean_norm_edit_dist=mean_ned,
                        gate_strong_mean=strong_mean, gate_weak_mean=weak_mean,
                        n=len(test.words), seed=seed)
    return EvalReport(record=record, predictions=preds,
                      alpha_sum_max_err=alpha_err, alpha_violations=alpha_bad,
                      gamma_violations=g_bad,
                      gamma_min=g_min if g_min is not math.inf else math.nan,
                      gamma_max=g_max if g_max is not -math.inf else math.nan)


def _gate_statistics(model, test, images, reference_labeler):
    """Teacher-forced gate scores bucketed by target strength."""
    if model.gate is None or model.clamp_gate or model.decoder.prev_mode != "normal":
        return math.nan, math.nan
    labeler = reference_labeler or sv.make_labeler("root")
    bsz = model.cfg.batch_size
    strong, weak = [], []
    for lo in range(0, len(test.words), bsz):
        words = test.words[lo:lo + bsz]
        batch = dt.make_batch(words, labeler, dt.RenderSpec(""),
                              np.zeros(len(words)), dtype=model.dtype,
                              images=images[lo:lo + bsz])
        scores, mask = model.forced_gate_scores(batch)
        sel = mask > 0
        targets = batch.gate_targets
        strong.extend(scores[sel & (targets > STRONG_TARGET)].tolist())
        weak.extend(scores[sel & (targets < WEAK_TARGET)].tolist())
    strong_mean = float(np.mean(strong)) if strong else math.nan
    weak_mean = float(np.mean(weak)) if weak else math.nan
    return strong_mean, weak_mean


# ---------------------------------------------------------------------------
# ablation arms

ARM_PRESETS = {
    "baseline": {"gate": "none", "gate_loss_weight": 0.0},
    "no-prev": {"gate": "none", "prev_mode": "none", "gate_loss_weight": 0.0},
    "random-prev": {"gate": "none", "prev_mode": "random", "gate_loss_weight": 0.0},
    "add": {"gate": "add"},
    "dot": {"gate": "dot"},
    "concat": {"gate": "concat"},
}


def arm_config(base_cfg, arm):
    """Resolve an arm name like 'add:root' or 'baseline' to a config."""
    name, _, supervision = arm.partition(":")
    if name not in ARM_PRESETS:
        raise ValueError(f"unknown arm {name!r} (have {sorted(ARM_PRESETS)})")
    overrides = dict(ARM_PRESETS[name])
    if supervision:
        if name in ("baseline", "no-prev", "random-prev"):
            raise ValueError(f"arm {name!r} takes no supervision suffix")
        overrides["supervision"] = supervision
    return base_cfg.updated(**overrides)


def run_key(cfg):
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def ensure_trained(cfg, cache_dir, log=None):
    """Train once per exact config; reuse the cached run directory after.

    Returns the run directory containing checkpoint.bin, metrics.csv
    and periodic step checkpoints.
    """
    run_dir = os.path.join(cache_dir, run_key(cfg))
    final = os.path.join(run_dir, "checkpoint.bin")
    if os.path.exists(final):
        return run_dir
    train(cfg, out_dir=run_dir, log=log)
    return run_dir


def ablate(base_cfg, arms, seeds, out_dir=None, cache_dir=None, log=None):
    """Train and evaluate each arm under every seed with shared data.

    Returns (records, failures): clean-set EvalRecords sorted by arm
    then seed, and a {(arm, seed): message} dict for aborted runs. When
    ``cache_dir`` is set, finished runs are reused across invocations.
    """
    log = log or (lambda msg: None)
    records, failures = [], {}
    for arm in sorted(arms):
        for seed in seeds:
            cfg = arm_config(base_cfg, arm).updated(seed=seed)
            try:
                if cache_dir:
                    run_dir = ensure_trained(cfg, cache_dir, log=log)
                    model, _ = load_model(os.path.join(run_dir, "checkpoint.bin"))
                    tdata = TrainingData(cfg)
                else:
                    result = train(cfg, log=log)
                    model = result.model
                    tdata = TrainingData(cfg)
                report = evaluate(model, tdata.test_set(), arm=arm, seed=seed,
                                  reference_labeler=tdata.reference_labeler)
                records.append(report.record)
                log(f"arm {arm} seed {seed}: accuracy {report.record.seq_accuracy:.4f}")
            except (TrainingDiverged, NonFiniteGradient) as e:
                failures[(arm, seed)] = str(e)
                log(f"arm {arm} seed {seed} FAILED: {e}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_records_csv(os.path.join(out_dir, "ablation.csv"), records)
        with open(os.path.join(out_dir, "ablation_summary.txt"), "w",
                  encoding="utf-8") as f:
            f.write(summarize_arms(records, failures))
    return records, failures


def summarize_arms(records, failures=None):
    by_arm = {}
    for r in records:
        by_arm.setdefault(r.arm, []).append(r.seq_accuracy)
    lines = [f"{'arm':<16} {'mean_acc':>9} {'std':>7} {'seeds':>6}"]
    for arm in sorted(by_arm):
        accs = np.array(by_arm[arm])
        lines.append(f"{arm:<16} {accs.mean():>9.4f} {accs.std():>7.4f} "
                     f"{len(accs):>6}")
    for (arm, seed), msg in sorted((failures or {}).items()):
        lines.append(f"{arm:<16} seed {seed} FAILED: {msg}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# robustness sweep

def noise_grid(cfg):
    return (("gaussian-blur", cfg.blur_levels),
            ("salt-pepper", cfg.salt_pepper_levels),
            ("occlusion", cfg.occlusion_levels))


def robustness_sweep(baseline_ckpts, gated_ckpts, out_dir=None, log=None):
    """Evaluate baseline and gated checkpoints across the noise grids.

    Each argument is a list of checkpoint paths (one per seed). Images
    and noise are paired across the two sides through content-keyed
    seeding. Emits robustness.csv plus one SVG per noise kind when
    ``out_dir`` is given.
    """
    log = log or (lambda msg: None)
    sides = (("baseline", baseline_ckpts), ("aeg", gated_ckpts))
    records = []
    grids = None
    for label, paths in sides:
        for path in paths:
            model, _ = load_model(path)
            cfg = model.cfg
            if grids is None:
                grids = noise_grid(cfg)
            tdata = TrainingData(cfg)
            test = tdata.test_set()
            for kind, levels in grids:
                for level in levels:
                    noise = None if level == 0 else (kind, float(level))
                    report = evaluate(model, test, arm=label, seed=cfg.seed,
                                      noise=noise or (kind, 0.0),
                                      reference_labeler=tdata.reference_labeler)
                    records.append(report.record)
                    log(f"{label} seed {cfg.seed} {kind}@{level}: "
                        f"acc {report.record.seq_accuracy:.4f}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_records_csv(os.path.join(out_dir, "robustness.csv"), records)
        for kind, levels in grids:
            series = {}
            for label, _ in sides:
                ys = []
                for level in levels:
                    accs = [r.seq_accuracy for r in records
                            if r.arm == label and r.noise_kind == kind
                            and r.noise_level == float(level)]
                    ys.append(float(np.mean(accs)))
                series[label] = (list(levels), ys)
            svg_line_chart(os.path.join(out_dir, f"robustness_{kind}.svg"),
                           f"accuracy under {kind}", kind + " level",
                           "sequence accuracy", series)
    return records
