import numpy as np
import pytest

from textgate import autodiff as ad
from textgate import data
from textgate.gate import AddGate, ConcatGate, DotGate, make_gate
from textgate.gradcheck import check_grads
from textgate.model import Recognizer
from textgate.params import ParamBank

from conftest import small_config


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def build_gate(kind, feat_dim=5, units=4, seed=0, dtype=np.float64):
    bank = ParamBank(seed, dtype=dtype)
    return make_gate(kind, bank, feat_dim, units), bank


class TestAddGate:
    def test_zero_everything_gives_half(self):
        g, _ = build_gate("add")
        zero = ad.tensor(np.zeros((2, 5)), dtype=np.float64)
        assert np.allclose(g.score(zero, zero).data, 0.5)

    def test_output_strictly_inside_unit_interval(self, rng):
        g, _ = build_gate("add")
        for _ in range(200):
            c = ad.tensor(rng.standard_normal((5, 5)) * 3, dtype=np.float64)
            p = ad.tensor(rng.standard_normal((5, 5)) * 3, dtype=np.float64)
            s = g.score(c, p).data
            assert np.all((s > 0.0) & (s < 1.0))

    def test_matches_formula_oracle(self, rng):
        g, _ = build_gate("add")
        c = rng.standard_normal((3, 5))
        p = rng.standard_normal((3, 5))
        got = g.score(ad.tensor(c, dtype=np.float64),
                      ad.tensor(p, dtype=np.float64)).data[:, 0]
        for i in range(3):
            pre = g.v.data @ np.tanh(g.w_p.data.T @ p[i] + g.w_c.data.T @ c[i]
                                     + g.b.data)
            assert abs(got[i] - sigmoid(pre)) < 1e-10

    def test_monotone_in_pre_activation(self, rng):
        g, _ = build_gate("add")
        c = ad.tensor(rng.standard_normal((1, 5)), dtype=np.float64)
        p = ad.tensor(rng.standard_normal((1, 5)), dtype=np.float64)
        pre = g.pre_activation(c, p).data[0, 0]
        score = g.score(c, p).data[0, 0]
        assert score == pytest.approx(sigmoid(pre), abs=1e-12)
        # pushing the pre-sigmoid scalar up always raises the score
        pres = np.linspace(pre - 2, pre + 2, 9)
        vals = sigmoid(pres)
        assert np.all(np.diff(vals) > 0)

    def test_dimension_mismatch_rejected(self):
        g, _ = build_gate("add")
        with pytest.raises(ValueError, match="gate dim"):
            g.score(ad.tensor(np.zeros((1, 4)), dtype=np.float64),
                    ad.tensor(np.zeros((1, 4)), dtype=np.float64))
        with pytest.raises(ValueError, match="pair"):
            g.score(ad.tensor(np.zeros((1, 5)), dtype=np.float64),
                    ad.tensor(np.zeros((2, 5)), dtype=np.float64))


class TestDotGate:
    def test_zero_previous_context_gives_half(self, rng):
        g, _ = build_gate("dot")
        c = ad.tensor(rng.standard_normal((2, 5)), dtype=np.float64)
        zero = ad.tensor(np.zeros((2, 5)), dtype=np.float64)
        assert np.allclose(g.score(c, zero).data, 0.5)

    def test_identity_projections_unit_vectors(self):
        g, _ = build_gate("dot", feat_dim=4, units=4)
        g.w_c.data[...] = np.eye(4)
        g.w_p.data[...] = np.eye(4)
        e1 = np.zeros((1, 4))
        e1[0, 0] = 1.0
        got = g.score(ad.tensor(e1, dtype=np.float64),
                      ad.tensor(e1, dtype=np.float64)).data[0, 0]
        assert got == pytest.approx(sigmoid(1.0), abs=1e-12)
        assert got == pytest.approx(0.7310585786, abs=1e-9)

    def test_gradient_vs_finite_differences(self, rng):
        g, bank = build_gate("dot")
        c = ad.tensor(rng.standard_normal((3, 5)), dtype=np.float64,
                      requires_grad=True)
        p = ad.tensor(rng.standard_normal((3, 5)), dtype=np.float64,
                      requires_grad=True)
        leaves = dict(bank.tensors)
        leaves.update({"c": c, "p": p})
        assert check_grads(lambda: ad.tsum(g.score(c, p)), leaves,
                           n_coords=4, rng=rng) < 1e-5


class TestConcatGate:
    def test_zero_params_give_half(self, rng):
        g, bank = build_gate("concat")
        for t in bank.tensors.values():
            t.data[...] = 0.0
        c = ad.tensor(rng.standard_normal((2, 5)), dtype=np.float64)
        p = ad.tensor(rng.standard_normal((2, 5)), dtype=np.float64)
        assert np.allclose(g.score(c, p).data, 0.5)

    def test_argument_order_matters(self, rng):
        g, _ = build_gate("concat")
        c = ad.tensor(rng.standard_normal((1, 5)), dtype=np.float64)
        p = ad.tensor(rng.standard_normal((1, 5)), dtype=np.float64)
        assert g.score(c, p).data[0, 0] != pytest.approx(
            g.score(p, c).data[0, 0], abs=1e-12)

    def test_matches_formula_oracle(self, rng):
        g, _ = build_gate("concat")
        c = rng.standard_normal((2, 5))
        p = rng.standard_normal((2, 5))
        got = g.score(ad.tensor(c, dtype=np.float64),
                      ad.tensor(p, dtype=np.float64)).data[:, 0]
        for i in range(2):
            joined = np.concatenate([g.w_c.data.T @ c[i], g.w_p.data.T @ p[i]])
            pre = g.v.data @ np.tanh(joined + g.b.data)
            assert abs(got[i] - sigmoid(pre)) < 1e-10


class TestMakeGate:
    def test_kinds(self):
        assert isinstance(build_gate("add")[0], AddGate)
        assert isinstance(build_gate("dot")[0], DotGate)
        assert isinstance(build_gate("concat")[0], ConcatGate)
        assert make_gate("none", ParamBank(0), 5, 4) is None
        with pytest.raises(ValueError, match="gate kind"):
            make_gate("mystery", ParamBank(0), 5, 4)


class TestGatedDecoding:
    def _batch(self, words=("ring", "cat"), seed=0):
        imgs = data.render_test_set(list(words), data.RenderSpec(""), test_seed=seed)
        return data.make_batch(list(words), lambda w: np.linspace(0, 1, len(w)),
                               data.RenderSpec(""), np.zeros(len(words)),
                               images=imgs)

    def test_clamped_gate_reproduces_baseline_bitwise(self):
        """Gate clamped to 1: identical logits, losses and shared-parameter
        gradients, bit for bit, across random instances."""
        batch = self._batch()
        for seed in range(100):
            base_cfg = small_config(gate="none", gate_loss_weight=0.0)
            clamp_cfg = small_config(gate="add", gate_clamp_one=True,
                                     gate_loss_weight=0.0)
            baseline = Recognizer(base_cfg, init_seed=seed)
            clamped = Recognizer(clamp_cfg, init_seed=seed)

            with ad.Tape() as tape_b:
                res_b = baseline.forced_loss(batch)
            tape_b.backward(res_b.total)
            with ad.Tape() as tape_c:
                res_c = clamped.forced_loss(batch)
            tape_c.backward(res_c.total)

            assert res_b.total.data == res_c.total.data  # bitwise
            for t in range(len(res_b.alphas)):
                assert np.array_equal(res_b.alphas[t].data, res_c.alphas[t].data)
            for name, pb in baseline.params.items():
                pc = clamped.params[name]
                assert np.array_equal(pb.data, pc.data), name
                assert np.array_equal(pb.grad, pc.grad), name

    def test_zero_gate_suppresses_previous_prediction(self):
        """Score forced to 0: the decoder behaves exactly as if the
        embedding table itself were all zero."""

        class ZeroGate:
            def score(self, c_now, c_prev):
                return ad.constant(np.zeros((c_now.data.shape[0], 1)),
                                   dtype=c_now.dtype)

        batch = self._batch()
        cfg = small_config(gate="none", gate_loss_weight=0.0)
        forced = Recognizer(cfg, init_seed=3)
        forced.gate = ZeroGate()
        zeroed = Recognizer(cfg, init_seed=3)
        zeroed.decoder.embedding.data[...] = 0.0

        res_f = forced.forced_loss(batch)
        res_z = zeroed.forced_loss(batch)
        assert res_f.total.data == res_z.total.data
        for a, b in zip(res_f.alphas, res_z.alphas):
            assert np.array_equal(a.data, b.data)

    def test_gate_scores_strictly_inside_unit_interval_end_to_end(self, rng):
        cfg = small_config(gate="add")
        model = Recognizer(cfg, init_seed=4)
        imgs = rng.random((3, 32, 100))
        _, _, _, scores = model.recognize(imgs)
        for s in scores:
            assert np.all((s > 0) & (s < 1))

    def test_gate_gradient_through_combined_loss(self):
        cfg = small_config(gate="add")
        model = Recognizer(cfg, init_seed=7, dtype=np.float64)
        batch = self._batch()
        leaves = {n: t for n, t in model.params.items() if n.startswith("gate.")}
        err = check_grads(lambda: model.forced_loss(batch).total, leaves,
                          n_coords=3, rng=np.random.default_rng(0))
        assert err < 1e-4


def test_gated_end_to_end_gradients_all_variants():
    from textgate.gradcheck import gate_suite

    results = gate_suite(seed=11)
    bad = [r.name for r in results if not r.ok]
    assert not bad, bad
