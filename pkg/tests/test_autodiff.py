import math

import numpy as np
import pytest

from textgate import autodiff as ad
from textgate.gradcheck import check_grads, ops_suite


def grads_of(build, leaves):
    for t in leaves:
        t.grad = None
    with ad.Tape() as tape:
        loss = build()
    tape.backward(loss)
    return [t.grad for t in leaves]


class TestElementwise:
    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(ad.tensor([0.0])).data[0] == pytest.approx(0.5, abs=0)

    def test_tanh_at_zero(self):
        assert ad.tanh(ad.tensor([0.0])).data[0] == 0.0

    def test_sigmoid_matches_formula(self):
        xs = np.linspace(-5, 5, 101)
        got = ad.sigmoid(ad.tensor(xs, dtype=np.float64)).data
        want = 1.0 / (1.0 + np.exp(-xs))
        assert np.max(np.abs(got - want)) < 1e-12

    def test_broadcast_add_rejects_bad_shapes(self):
        a = ad.tensor(np.zeros((3, 4)))
        b = ad.tensor(np.zeros((5,)))
        with pytest.raises(ValueError, match=r"\(3, 4\)"):
            ad.add(a, b)

    def test_scalar_broadcast_mul(self):
        gate = ad.tensor([[0.25], [2.0]])
        v = ad.tensor([[1.0, 2.0, 3.0], [1.0, 1.0, 1.0]])
        out = ad.mul(gate, v)
        assert np.allclose(out.data, [[0.25, 0.5, 0.75], [2, 2, 2]])


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 3))
        out = ad.matmul(ad.tensor(np.eye(3)), ad.tensor(a))
        assert np.array_equal(out.data, a.astype(np.float32))

    def test_hand_product(self):
        a = ad.tensor([[1.0, 2.0], [3.0, 4.0]])
        b = ad.tensor([[0.0], [1.0]])
        assert np.array_equal(ad.matmul(a, b).data, [[2.0], [4.0]])

    def test_inner_dim_mismatch(self):
        with pytest.raises(ValueError, match="inner dimensions"):
            ad.matmul(ad.tensor(np.zeros((2, 3))), ad.tensor(np.zeros((4, 2))))

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(2)
        a = ad.tensor(rng.standard_normal((3, 4)), dtype=np.float64, requires_grad=True)
        b = ad.tensor(rng.standard_normal((4, 2)), dtype=np.float64, requires_grad=True)
        err = check_grads(lambda: ad.tsum(ad.matmul(a, b)), {"a": a, "b": b}, n_coords=6)
        assert err < 1e-6


class TestConv2d:
    # image layout is channels-last: (batch, height, width, channels)

    def test_identity_kernel(self):
        rng = np.random.default_rng(3)
        img = rng.random((1, 4, 4, 1))
        k = ad.tensor(np.ones((1, 1, 1, 1)))
        out = ad.conv2d(ad.tensor(img), k, stride=1, padding=0)
        assert np.allclose(out.data, img, atol=1e-7)

    def test_ones_kernel_stride2(self):
        x = ad.tensor(np.ones((1, 4, 4, 1)))
        k = ad.tensor(np.ones((1, 1, 2, 2)))
        out = ad.conv2d(x, k, stride=2, padding=0)
        assert out.data.shape == (1, 2, 2, 1)
        assert np.all(out.data == 4.0)

    def test_hand_computed_cross_correlation(self):
        x = np.zeros((1, 3, 3, 1))
        x[0, :, :, 0] = [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
        k = np.zeros((1, 1, 2, 2))
        k[0, 0] = [[1, 0], [0, 1]]  # picks x[i,j] + x[i+1,j+1]
        out = ad.conv2d(ad.tensor(x), ad.tensor(k), stride=1, padding=0)
        assert np.array_equal(out.data[0, :, :, 0], [[6, 8], [12, 14]])

    def test_kernel_too_large_rejected(self):
        with pytest.raises(ValueError, match="larger than padded input"):
            ad.conv2d(ad.tensor(np.zeros((1, 2, 2, 1))), ad.tensor(np.zeros((1, 1, 5, 5))))

    def test_kernel_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(4)
        x = ad.tensor(rng.standard_normal((2, 5, 6, 2)), dtype=np.float64)
        k = ad.tensor(rng.standard_normal((3, 2, 3, 3)), dtype=np.float64, requires_grad=True)

        def build():
            out = ad.conv2d(x, k, stride=(2, 1), padding=1)
            return ad.tsum(ad.mul(out, out))

        assert check_grads(build, {"k": k}, n_coords=8) < 1e-5


class TestSoftmax:
    def test_symmetry(self):
        out = ad.softmax(ad.tensor([0.0, 0.0])).data
        assert np.allclose(out, [0.5, 0.5])

    def test_shift_overflow(self):
        out = ad.softmax(ad.tensor([1000.0, 1000.0, 1000.0])).data
        assert np.all(np.isfinite(out))
        assert np.allclose(out, 1 / 3)

    def test_high_precision_oracle(self):
        import mpmath
        mpmath.mp.dps = 50
        xs = [1.0, 2.0, 3.0]
        es = [mpmath.e ** x for x in xs]
        want = np.array([float(e / sum(es)) for e in es])
        got = ad.softmax(ad.tensor(xs, dtype=np.float64)).data
        assert np.max(np.abs(got - want)) < 1e-10

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="NaN or Inf"):
            ad.softmax(ad.tensor([1.0, float("nan")]))

    def test_sums_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = rng.standard_normal(7) * 10
            s = ad.softmax(ad.tensor(x, dtype=np.float64)).data
            assert abs(s.sum() - 1.0) < 1e-6
            shifted = ad.softmax(ad.tensor(x + 17.25, dtype=np.float64)).data
            assert np.max(np.abs(s - shifted)) < 1e-10


class TestGRUCell:
    def _params(self, rng, din, dh, scale=1.0):
        t = lambda shp: ad.tensor(rng.standard_normal(shp) * scale, dtype=np.float64,
                                  requires_grad=True)
        return {"w": t((din, 3 * dh)), "b": t((3 * dh,)),
                "uz": t((dh, dh)), "ur": t((dh, dh)), "uh": t((dh, dh))}

    def _cell(self, x, h, p):
        xp = ad.add(ad.matmul(x, p["w"]), p["b"])
        return ad.gru_core(xp, h, p["uz"], p["ur"], p["uh"])

    def test_zero_params_zero_state(self):
        rng = np.random.default_rng(6)
        p = self._params(rng, 4, 3, scale=0.0)
        x = ad.tensor(rng.standard_normal((2, 4)), dtype=np.float64)
        h = ad.tensor(np.zeros((2, 3)), dtype=np.float64)
        out = self._cell(x, h, p)
        assert np.allclose(out.data, 0.0)

    def test_closed_update_gate_carries_state(self):
        rng = np.random.default_rng(7)
        p = self._params(rng, 4, 3)
        p["b"].data[:3] = -40.0  # z ~ 0 -> h' = h
        x = ad.tensor(rng.standard_normal((2, 4)), dtype=np.float64)
        h = ad.tensor(rng.standard_normal((2, 3)), dtype=np.float64)
        out = self._cell(x, h, p)
        assert np.max(np.abs(out.data - h.data)) < 1e-12

    def test_all_parameter_gradients(self):
        rng = np.random.default_rng(8)
        p = self._params(rng, 4, 3)
        x = ad.tensor(rng.standard_normal((2, 4)), dtype=np.float64, requires_grad=True)
        h = ad.tensor(rng.standard_normal((2, 3)), dtype=np.float64, requires_grad=True)
        mix = ad.tensor(rng.standard_normal((2, 3)), dtype=np.float64)

        def build():
            return ad.tsum(ad.mul(self._cell(x, h, p), mix))

        leaves = dict(p)
        leaves["x"] = x
        leaves["h"] = h
        assert check_grads(build, leaves, n_coords=4) < 1e-5


class TestBackward:
    def test_identity_loss(self):
        x = ad.tensor([3.0], requires_grad=True)
        with ad.Tape() as tape:
            pass
        tape.backward(x)
        assert x.grad[0] == 1.0

    def test_quadratic(self):
        x = ad.tensor([1.0, -2.0, 0.5], dtype=np.float64, requires_grad=True)
        (g,) = grads_of(lambda: ad.tsum(ad.mul(x, x)), [x])
        assert np.allclose(g, 2 * x.data)

    def test_non_scalar_rejected(self):
        x = ad.tensor([1.0, 2.0], requires_grad=True)
        with ad.Tape() as tape:
            y = ad.mul(x, x)
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(y)

    def test_off_tape_loss_rejected(self):
        x = ad.tensor([1.0], requires_grad=True)
        with ad.Tape():
            pass
        with ad.Tape() as other:
            pass
        y = ad.mul(x, x)  # built with no tape active
        with pytest.raises(ValueError, match="not produced"):
            other.backward(y)

    def test_repeated_backward_accumulates(self):
        x = ad.tensor([2.0], dtype=np.float64, requires_grad=True)
        with ad.Tape() as tape:
            y = ad.tsum(ad.mul(x, x))
        tape.backward(y)
        tape.backward(y)
        assert np.allclose(x.grad, 2 * 2 * x.data)

    def test_replay_idempotent_after_reset(self):
        rng = np.random.default_rng(9)
        x = ad.tensor(rng.standard_normal(5), dtype=np.float64, requires_grad=True)
        w = ad.tensor(rng.standard_normal(5), dtype=np.float64, requires_grad=True)

        def run():
            x.grad = None
            w.grad = None
            with ad.Tape() as tape:
                loss = ad.tsum(ad.mul(ad.tanh(ad.mul(x, w)), x))
            tape.backward(loss)
            return x.grad.copy(), w.grad.copy()

        g1x, g1w = run()
        g2x, g2w = run()
        assert np.array_equal(g1x, g2x)
        assert np.array_equal(g1w, g2w)

    def test_fanout_accumulation(self):
        # y used twice: d/dx (x*x + 3x) = 2x + 3
        x = ad.tensor([4.0], dtype=np.float64, requires_grad=True)
        (g,) = grads_of(lambda: ad.tsum(ad.add(ad.mul(x, x), ad.scale(x, 3.0))), [x])
        assert g[0] == pytest.approx(2 * 4 + 3)


def test_fd_agreement_over_random_instances():
    """Central differences agree with the tape within 1e-4 over 100 cases."""
    rng = np.random.default_rng(10)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(2, 6))
        x = ad.tensor(rng.standard_normal((n, n)), dtype=np.float64, requires_grad=True)
        w = ad.tensor(rng.standard_normal((n, n)), dtype=np.float64, requires_grad=True)

        def build():
            h = ad.tanh(ad.matmul(x, w))
            s = ad.softmax(h, axis=-1)
            return ad.tsum(ad.mul(s, ad.sigmoid(x)))

        worst = max(worst, check_grads(build, {"x": x, "w": w}, n_coords=2, rng=rng))
    assert worst < 1e-4


def test_ops_suite_all_pass():
    results = ops_suite(seed=123)
    bad = [r.name for r in results if not r.ok]
    assert not bad, f"failing op checks: {bad}"


def test_eval_mode_records_nothing():
    x = ad.tensor([1.0, 2.0], requires_grad=True)
    y = ad.mul(x, x)  # no tape active
    assert not y.requires_grad
    with ad.Tape() as tape:
        z = ad.mul(x, x)
    assert z.requires_grad
    assert len(tape) == 1
