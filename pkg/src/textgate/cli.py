"""Command line driver.

Subcommands: train, eval, ablate, robustness, label, gradcheck, render.
Common flags: --config <json>, --seed, --out-dir.
"""

import argparse
import os
import sys

import numpy as np

from . import data as dt
from . import gradcheck as gc
from . import supervision as sv
from .config import ExperimentConfig
from .harness import (TrainingData, ablate, evaluate, load_model, noise_grid,
                      robustness_sweep, summarize_arms, train)
from .metrics import lexicon_correct
from .reports import write_records_csv


def _load_config(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.updated(seed=args.seed)
    if getattr(args, "iterations", None) is not None:
        cfg = cfg.updated(iterations=args.iterations)
    return cfg.validate()


def _parse_noise(text):
    kind, _, level = text.partition(":")
    if kind not in dt.NOISE_KINDS:
        raise SystemExit(f"noise kind must be one of {dt.NOISE_KINDS}, got {kind!r}")
    try:
        return kind, float(level)
    except ValueError:
        raise SystemExit(f"bad noise level {level!r} (want kind:level)") from None


def cmd_train(args):
    cfg = _load_config(args)
    out_dir = args.out_dir or "run"
    result = train(cfg, out_dir=out_dir, log=print)
    print(f"finished {result.steps} steps; checkpoint at {result.checkpoint_path}")


def cmd_eval(args):
    model, _ = load_model(args.checkpoint)
    tdata = TrainingData(model.cfg)
    test = tdata.test_set()
    noise = _parse_noise(args.noise) if args.noise else None
    lexicon = None
    if args.lexicon:
        lexicon = sv.load_wordlist(args.lexicon)
    report = evaluate(model, test, arm=args.arm, noise=noise, lexicon=lexicon,
                      reference_labeler=tdata.reference_labeler)
    r = report.record
    print(f"arm={r.arm} noise={r.noise_kind}@{r.noise_level:g} "
          f"accuracy={r.seq_accuracy:.4f} norm_edit_dist={r.mean_norm_edit_dist:.4f} "
          f"gate_strong={r.gate_strong_mean:.4f} gate_weak={r.gate_weak_mean:.4f} "
          f"n={r.n}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        write_records_csv(os.path.join(args.out_dir, "eval.csv"), [r])


def cmd_ablate(args):
    cfg = _load_config(args)
    arms = [a.strip() for a in args.arms.split(",") if a.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    records, failures = ablate(cfg, arms, seeds, out_dir=args.out_dir,
                               cache_dir=args.cache_dir, log=print)
    print(summarize_arms(records, failures))
    if failures:
        sys.exit(1)


def cmd_robustness(args):
    def resolve(paths, step):
        out = []
        for p in paths.split(","):
            p = p.strip()
            if os.path.isdir(p):
                name = f"ckpt_step{step}.bin" if step else "checkpoint.bin"
                p = os.path.join(p, name)
            out.append(p)
        return out

    baseline = resolve(args.baseline, None)
    gated = resolve(args.aeg, args.match_baseline_steps)
    out_dir = args.out_dir or "robustness"
    records = robustness_sweep(baseline, gated, out_dir=out_dir, log=print)
    print(f"wrote {len(records)} records to {out_dir}/robustness.csv")


def cmd_label(args):
    word = args.word.lower()
    if args.mode == "word-frequency":
        matrix = sv.build_transition_matrix(sv.load_wordlist(args.dictionary or None))
        target = sv.label_word_frequency(word, matrix)
    else:
        roots = sv.load_roots(args.roots or None)
        target = sv.label_root(word, roots)
        hits = []
        for root in roots:
            start = 0
            while True:
                s = word.find(root, start)
                if s < 0:
                    break
                hits.append((root, s))
                start = s + 1
        for root, s in sorted(hits, key=lambda h: (h[1], h[0])):
            print(f"root {root!r} at position {s}")
    print("gate target:", "[" + ", ".join(f"{v:.4f}" for v in target) + "]")


def cmd_gradcheck(args):
    results, elapsed = gc.run_scope(args.scope, seed=args.seed or 0)
    ok = gc.report(results, elapsed)
    sys.exit(0 if ok else 1)


def cmd_render(args):
    cfg = _load_config(args)
    out_dir = args.out_dir or "renders"
    os.makedirs(out_dir, exist_ok=True)
    template = dt.RenderSpec("", 0, cfg.fg_jitter, cfg.offset_x, cfg.offset_y,
                             cfg.bg_noise, cfg.pixel_flip)
    words = args.words.split(",") if args.words else ["sample"]
    seed = args.seed or 0
    for word in words:
        from dataclasses import replace
        img = dt.render_word(replace(template, word=word.strip(), seed=seed))
        if args.noise:
            kind, level = _parse_noise(args.noise)
            img = dt.perturb(img, kind, level, seed=dt.content_seed(seed, word))
        path = os.path.join(out_dir, f"{word.strip()}_{seed}.pgm")
        dt.write_pgm(path, img)
        print("wrote", path)


def build_parser():
    parser = argparse.ArgumentParser(prog="textgate",
                                     description="gated attentional word recognizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out-dir", help="output directory")

    p = sub.add_parser("train", help="train one model to the configured budget")
    common(p)
    p.add_argument("--iterations", type=int, help="override the iteration budget")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--noise", help="kind:level, e.g. salt-pepper:0.1")
    p.add_argument("--lexicon", help="word list for nearest-word correction")
    p.add_argument("--arm", default="model", help="arm label for the record")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare ablation arms")
    common(p)
    p.add_argument("--arms", default="baseline,add:root",
                   help="comma list, e.g. baseline,add:root,random-prev")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--iterations", type=int)
    p.add_argument("--cache-dir", help="reuse finished runs from this directory")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("robustness", help="noise sweep for baseline vs gated")
    common(p, config=False)
    p.add_argument("--baseline", required=True,
                   help="checkpoint file(s) or run dir(s), comma separated")
    p.add_argument("--aeg", required=True,
                   help="gated checkpoint file(s) or run dir(s)")
    p.add_argument("--match-baseline-steps", type=int,
                   help="use the gated step-N checkpoint (early stop for fair "
                        "comparison); applies when --aeg is a run directory")
    p.set_defaults(fn=cmd_robustness)

    p = sub.add_parser("label", help="print the gate target for a word")
    p.add_argument("--word", required=True)
    p.add_argument("--mode", choices=("word-frequency", "root"), default="root")
    p.add_argument("--dictionary", help="word list file (word-frequency mode)")
    p.add_argument("--roots", help="root table file (root mode)")
    p.set_defaults(fn=cmd_label)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--scope", choices=("ops", "encoder", "decoder", "gate", "full"),
                   default="ops")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("render", help="dump sample word images as PGM")
    common(p)
    p.add_argument("--words", help="comma-separated words")
    p.add_argument("--noise", help="kind:level perturbation to apply")
    p.set_defaults(fn=cmd_render)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
