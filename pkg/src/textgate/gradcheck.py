"""Finite-difference gradient verification.

Every differentiable code path in the package can be checked in double
precision against central differences. The CLI exposes scoped suites
(ops / encoder / decoder / gate / full); tests reuse the same helpers.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

FD_STEP = 1e-4
DEFAULT_TOL = 1e-4
ATOL_FLOOR = 1e-7


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float

    @property
    def ok(self):
        return self.max_err < self.tol

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        return f"{status}  {self.name:40s} rel err {self.max_err:.3e} (tol {self.tol:.0e})"


def rel_err(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ATOL_FLOOR / DEFAULT_TOL)


def fd_partial(f, leaf, index, step=FD_STEP):
    """Central difference of scalar-valued ``f()`` wrt one coordinate of ``leaf``."""
    orig = leaf.data.flat[index]
    leaf.data.flat[index] = orig + step
    fp = f()
    leaf.data.flat[index] = orig - step
    fm = f()
    leaf.data.flat[index] = orig
    return (fp - fm) / (2.0 * step)


def check_grads(build, leaves, n_coords=3, step=FD_STEP, rng=None, coords_for=None):
    """Compare tape gradients of ``build()`` with central differences.

    ``build`` runs the forward pass and returns a scalar Tensor; it is
    re-executed for every probe so it must be deterministic. Probes
    ``n_coords`` random coordinates per leaf (all coordinates when the
    leaf is that small); ``coords_for`` may pin explicit flat indices
    for named leaves. Returns the worst relative error seen.
    """
    rng = rng or np.random.default_rng(0)
    coords_for = coords_for or {}
    for leaf in leaves.values():
        leaf.grad = None
    with ad.Tape() as tape:
        loss = build()
    tape.backward(loss)
    analytic = {n: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
                for n, leaf in leaves.items()}

    def f():
        return build().item()

    worst = 0.0
    for name, leaf in leaves.items():
        size = leaf.data.size
        if name in coords_for:
            coords = coords_for[name]
        elif size <= n_coords:
            coords = range(size)
        else:
            coords = rng.choice(size, size=n_coords, replace=False)
        for index in coords:
            num = fd_partial(f, leaf, int(index), step=step)
            ana = float(analytic[name].flat[int(index)])
            worst = max(worst, rel_err(ana, num))
    return worst


# ---------------------------------------------------------------------------
# scoped suites (ops suite here; model-level scopes are registered lazily to
# avoid import cycles)

def _rand(rng, *shape):
    return ad.tensor(rng.standard_normal(shape), dtype=np.float64, requires_grad=True)


def ops_suite(seed=0, tol=DEFAULT_TOL):
    """Per-operation finite-difference checks in double precision."""
    rng = np.random.default_rng(seed)
    results = []

    def run(name, build, leaves):
        err = check_grads(build, leaves, rng=rng)
        results.append(CheckResult(name, err, tol))

    a = _rand(rng, 4, 5)
    b = _rand(rng, 4, 5)
    run("add", lambda: ad.tsum(ad.mul(ad.add(a, b), ad.add(a, b))), {"a": a, "b": b})
    run("mul", lambda: ad.tsum(ad.mul(a, b)), {"a": a, "b": b})
    bias = _rand(rng, 5)
    run("add broadcast", lambda: ad.tsum(ad.mul(ad.add(a, bias), a)), {"a": a, "bias": bias})
    run("scale", lambda: ad.tsum(ad.scale(a, -2.5)), {"a": a})
    run("sigmoid", lambda: ad.tsum(ad.mul(ad.sigmoid(a), b)), {"a": a})
    run("tanh", lambda: ad.tsum(ad.mul(ad.tanh(a), b)), {"a": a})
    pos = ad.tensor(np.abs(np.asarray(a.data)) + 0.5, dtype=np.float64, requires_grad=True)
    run("log", lambda: ad.tsum(ad.log(pos)), {"pos": pos})

    m1 = _rand(rng, 3, 4)
    m2 = _rand(rng, 4, 6)
    run("matmul", lambda: ad.tsum(ad.mul(ad.matmul(m1, m2), ad.matmul(m1, m2))),
        {"m1": m1, "m2": m2})

    run("softmax", lambda: ad.tsum(ad.mul(ad.softmax(a, axis=-1), b)), {"a": a})
    run("sum axis", lambda: ad.tsum(ad.mul(ad.tsum(a, axis=0), bias)), {"a": a})
    run("reshape", lambda: ad.tsum(ad.mul(ad.reshape(a, (2, 10)), ad.reshape(b, (2, 10)))),
        {"a": a})
    cube = _rand(rng, 2, 3, 4)
    run("permute", lambda: ad.tsum(ad.mul(ad.permute(cube, (2, 0, 1)),
                                          ad.permute(cube, (2, 0, 1)))),
        {"cube": cube})
    run("concat", lambda: ad.tsum(ad.mul(ad.concat([a, b], axis=1), ad.concat([b, a], axis=1))),
        {"a": a, "b": b})
    run("stack", lambda: ad.tsum(ad.mul(ad.stack([a, b], axis=1), ad.stack([b, a], axis=1))),
        {"a": a, "b": b})

    wide = _rand(rng, 4, 6)

    def split_build():
        p1, p2, p3 = ad.split(wide, 2, axis=1)
        return ad.tsum(ad.mul(p1, p2)) + ad.tsum(ad.mul(p3, p3))

    run("split", split_build, {"wide": wide})

    table = _rand(rng, 7, 3)
    idx = np.array([0, 3, 3, 6])
    run("embed", lambda: ad.tsum(ad.mul(ad.embed(table, idx), ad.embed(table, idx))),
        {"table": table})

    logits = _rand(rng, 4, 5)
    run("pick", lambda: ad.tsum(ad.pick(logits, np.array([1, 0, 4, 2]))), {"logits": logits})

    x = _rand(rng, 2, 6, 7, 3)
    k = _rand(rng, 4, 3, 3, 3)
    run("conv2d", lambda: ad.tsum(ad.mul(ad.conv2d(x, k, stride=(2, 1), padding=1),
                                         ad.conv2d(x, k, stride=(2, 1), padding=1))),
        {"x": x, "k": k})

    xp = _rand(rng, 4, 9)
    h = _rand(rng, 4, 3)
    uz = _rand(rng, 3, 3)
    ur = _rand(rng, 3, 3)
    uh = _rand(rng, 3, 3)
    run("gru_core", lambda: ad.tsum(ad.mul(ad.gru_core(xp, h, uz, ur, uh),
                                           ad.gru_core(xp, h, uz, ur, uh))),
        {"xp": xp, "h": h, "uz": uz, "ur": ur, "uh": uh})

    seq = _rand(rng, 2, 5, 9)
    h0 = _rand(rng, 2, 3)
    mixer = _rand(rng, 2, 5, 3)
    for reverse in (False, True):
        run(f"gru_sequence reverse={reverse}",
            lambda rev=reverse: ad.tsum(ad.mul(
                ad.gru_sequence(seq, h0, uz, ur, uh, reverse=rev), mixer)),
            {"seq": seq, "h0": h0, "uz": uz, "ur": ur, "uh": uh})

    return results


def _small_config(gate="add", prev_mode="normal", supervision="root"):
    from .config import ExperimentConfig
    return ExperimentConfig(
        feat_dim=12, hidden_dim=10, embed_dim=6, attn_units=8, gate_units=6,
        max_steps=8, conv_channels=(4, 6, 8), rnn_hidden=6, rnn_layers=2,
        gate=gate, prev_mode=prev_mode, supervision=supervision,
        batch_size=2, iterations=1, test_words=2)


def _double_model(cfg, seed):
    from .model import Recognizer
    model = Recognizer(cfg, init_seed=seed, dtype=np.float64)
    # wiggle the biases so no activation sits at a symmetric point
    rng = np.random.default_rng(seed + 1)
    for name, t in model.params.items():
        if name.endswith("/b") or name.endswith("/b_o") or name.endswith("dec.out/b"):
            t.data += 0.05 * rng.standard_normal(t.data.shape)
    return model


def _sample_batch(cfg, seed, n=1):
    from . import data as dt
    from . import supervision as sv
    words = ["ring", "ab1"][:n] if n <= 2 else ["ring", "ab1", "toes"][:n]
    labeler = sv.make_labeler("root", roots=["ring", "ing"])
    rng = np.random.default_rng(seed)
    return dt.make_batch(words, labeler, dt.RenderSpec("", fg_jitter=0.05,
                                                       offset_x=2, offset_y=2,
                                                       bg_noise=0.08),
                         rng.integers(0, 2 ** 32, size=n), dtype=np.float64)


def encoder_suite(seed=0, tol=DEFAULT_TOL):
    """FD through the conv stack and the bidirectional recurrent pass."""
    cfg = _small_config(gate="none")
    model = _double_model(cfg, seed)
    batch = _sample_batch(cfg, seed)
    mix = ad.tensor(np.random.default_rng(seed).standard_normal(
        (1, model.encoder.seq_len, cfg.feat_dim)), dtype=np.float64)

    def build():
        return ad.tsum(ad.mul(model.encode(batch.images), mix))

    leaves = {n: t for n, t in model.params.items() if n.startswith("enc.")}
    err = check_grads(build, leaves, n_coords=2, rng=np.random.default_rng(seed))
    return [CheckResult("encoder full pass", err, tol)]


def decoder_suite(seed=0, tol=DEFAULT_TOL):
    """FD through the teacher-forced loss of the ungated decoder."""
    cfg = _small_config(gate="none")
    model = _double_model(cfg, seed)
    batch = _sample_batch(cfg, seed)

    def build():
        return model.forced_loss(batch).total

    leaves = {n: t for n, t in model.params.items() if n.startswith("dec.")}
    err = check_grads(build, leaves, n_coords=2, rng=np.random.default_rng(seed))
    return [CheckResult("decoder forced loss", err, tol)]


def gate_suite(seed=0, tol=DEFAULT_TOL):
    """FD through every gate variant, both standalone and end to end."""
    from .gate import make_gate
    from .params import ParamBank
    results = []
    rng = np.random.default_rng(seed)
    for kind in ("add", "dot", "concat"):
        bank = ParamBank(seed, dtype=np.float64)
        g = make_gate(kind, bank, 5, 4)
        c_now = _rand(rng, 3, 5)
        c_prev = _rand(rng, 3, 5)
        leaves = dict(bank.tensors)
        leaves["c_now"] = c_now
        leaves["c_prev"] = c_prev
        err = check_grads(lambda: ad.tsum(g.score(c_now, c_prev)), leaves,
                          n_coords=3, rng=rng)
        results.append(CheckResult(f"gate {kind} standalone", err, tol))

        cfg = _small_config(gate=kind)
        model = _double_model(cfg, seed)
        batch = _sample_batch(cfg, seed)
        gate_leaves = {n: t for n, t in model.params.items() if n.startswith("gate.")}
        err = check_grads(lambda: model.forced_loss(batch).total, gate_leaves,
                          n_coords=3, rng=np.random.default_rng(seed))
        results.append(CheckResult(f"gate {kind} through combined loss", err, tol))
    return results


def full_suite(seed=0, tol=DEFAULT_TOL):
    """Whole-model FD on a 1-sample batch for every parameter group,
    repeated for each gate variant (recognition + gate losses active)."""
    results = []
    groups = (("encoder", "enc."), ("attention", "dec.attn"), ("gru", "dec.gru"),
              ("embedding", "dec.embed"), ("output head", "dec.out"),
              ("gate", "gate."))
    for kind in ("add", "dot", "concat"):
        cfg = _small_config(gate=kind)
        model = _double_model(cfg, seed)
        batch = _sample_batch(cfg, seed)

        def build():
            return model.forced_loss(batch).total

        # aim the embedding probes at vocabulary rows the batch feeds in
        used_rows = sorted({int(t) for t in batch.tokens_in.ravel()})
        emb_dim = model.cfg.embed_dim
        emb_coords = [r * emb_dim + c for r in used_rows[:3] for c in (0, emb_dim - 1)]

        for label, prefix in groups:
            leaves = {n: t for n, t in model.params.items() if n.startswith(prefix)}
            if not leaves:
                continue
            err = check_grads(build, leaves, n_coords=2,
                              rng=np.random.default_rng(seed),
                              coords_for={"dec.embed": emb_coords})
            results.append(CheckResult(f"{kind} gate / {label}", err, tol))
    return results


def full_scope(seed=0, tol=DEFAULT_TOL):
    results = []
    for fn in (ops_suite, encoder_suite, decoder_suite, gate_suite, full_suite):
        results.extend(fn(seed=seed, tol=tol))
    return results


_SCOPES = {"ops": ops_suite, "encoder": encoder_suite, "decoder": decoder_suite,
           "gate": gate_suite, "full": full_scope}


def run_scope(scope, seed=0):
    """Run one scoped suite; 'full' runs everything."""
    if scope not in _SCOPES:
        raise ValueError(f"unknown gradcheck scope '{scope}' (have {sorted(_SCOPES)})")
    t0 = time.perf_counter()
    results = _SCOPES[scope](seed=seed)
    elapsed = time.perf_counter() - t0
    return results, elapsed


def report(results, elapsed, out=print):
    for r in results:
        out(r.line())
    n_bad = sum(1 for r in results if not r.ok)
    out(f"{len(results) - n_bad}/{len(results)} checks passed in {elapsed:.1f}s")
    return n_bad == 0
