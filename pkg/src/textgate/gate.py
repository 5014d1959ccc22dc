"""Adaptive embedding gate: a scalar in (0,1) per decoding step.

The gate scores how strongly the previous prediction should guide the
current step, computed from the two neighboring attention contexts.
The score multiplies the previous-prediction embedding before it
enters the decoder recurrence. Three instantiations are provided; all
take (context_now, context_prev) of feature dimension d and return a
(B, 1) tensor strictly inside (0, 1).
"""

from . import autodiff as ad

GATE_KINDS = ("add", "dot", "concat")


def _check_pair(c_now, c_prev, dim):
    if c_now.data.ndim != 2 or c_now.data.shape[1] != dim:
        raise ValueError(f"context shape {c_now.data.shape} does not match gate dim {dim}")
    if c_prev.data.shape != c_now.data.shape:
        raise ValueError(f"context pair shapes differ: {c_now.data.shape} "
                         f"vs {c_prev.data.shape}")


class AddGate:
    """sigmoid(v . tanh(Wp c_prev + Wc c_now + b)): additive comparison."""

    kind = "add"

    def __init__(self, bank, prefix, feat_dim, units):
        self.feat_dim = feat_dim
        self.w_p = bank.weight(f"{prefix}/w_p", (feat_dim, units))
        self.w_c = bank.weight(f"{prefix}/w_c", (feat_dim, units))
        self.b = bank.bias(f"{prefix}/b", (units,))
        self.v = bank.weight(f"{prefix}/v", (units,), fan_in=units)

    def pre_activation(self, c_now, c_prev):
        _check_pair(c_now, c_prev, self.feat_dim)
        m = ad.tanh(ad.add(ad.add(ad.matmul(c_prev, self.w_p),
                                  ad.matmul(c_now, self.w_c)), self.b))
        return ad.tsum(ad.mul(m, self.v), axis=1, keepdims=True)

    def score(self, c_now, c_prev):
        return ad.sigmoid(self.pre_activation(c_now, c_prev))


class DotGate:
    """sigmoid((Wc c_now) . (Wp c_prev)): projected dot-product similarity,
    deliberately unscaled."""

    kind = "dot"

    def __init__(self, bank, prefix, feat_dim, units):
        self.feat_dim = feat_dim
        self.w_c = bank.weight(f"{prefix}/w_c", (feat_dim, units))
        self.w_p = bank.weight(f"{prefix}/w_p", (feat_dim, units))

    def score(self, c_now, c_prev):
        _check_pair(c_now, c_prev, self.feat_dim)
        dots = ad.tsum(ad.mul(ad.matmul(c_now, self.w_c),
                              ad.matmul(c_prev, self.w_p)),
                       axis=1, keepdims=True)
        return ad.sigmoid(dots)


class ConcatGate:
    """sigmoid(v . tanh([Wc c_now, Wp c_prev] + b)): concatenation form,
    asymmetric in its two arguments."""

    kind = "concat"

    def __init__(self, bank, prefix, feat_dim, units):
        self.feat_dim = feat_dim
        self.w_c = bank.weight(f"{prefix}/w_c", (feat_dim, units))
        self.w_p = bank.weight(f"{prefix}/w_p", (feat_dim, units))
        self.b = bank.bias(f"{prefix}/b", (2 * units,))
        self.v = bank.weight(f"{prefix}/v", (2 * units,), fan_in=2 * units)

    def score(self, c_now, c_prev):
        _check_pair(c_now, c_prev, self.feat_dim)
        joined = ad.concat([ad.matmul(c_now, self.w_c),
                            ad.matmul(c_prev, self.w_p)], axis=1)
        m = ad.tanh(ad.add(joined, self.b))
        return ad.sigmoid(ad.tsum(ad.mul(m, self.v), axis=1, keepdims=True))


def make_gate(kind, bank, feat_dim, units):
    if kind == "none":
        return None
    if kind == "add":
        return AddGate(bank, "gate.add", feat_dim, units)
    if kind == "dot":
        return DotGate(bank, "gate.dot", feat_dim, units)
    if kind == "concat":
        return ConcatGate(bank, "gate.concat", feat_dim, units)
    raise ValueError(f"unknown gate kind {kind!r} (have none, {', '.join(GATE_KINDS)})")
