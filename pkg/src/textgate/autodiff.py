"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray; operations executed while a Tape is active
append their backward rules to the tape, and ``Tape.backward(loss)``
replays the rules in reverse order, accumulating gradients into the
leaf tensors that were created with ``requires_grad=True``.

Conventions:
  * training runs in float32, gradient checks run the identical code
    paths in float64 (pass ``dtype`` when creating leaves),
  * matmul is strictly 2-D; higher-rank work is done with reshape,
    broadcasting elementwise ops and axis reductions,
  * only leaves accumulate ``.grad``; intermediate adjoints live in a
    scratch dict local to one backward pass, so repeated backward calls
    accumulate exactly and never double-count through stale buffers.
"""

import numpy as np

_active_tape = None


class Tape:
    """Ordered record of executed operations and their backward rules."""

    def __init__(self):
        self.entries = []  # (outputs tuple, inputs tuple, vjp)

    def __len__(self):
        return len(self.entries)

    def __enter__(self):
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into every requires-grad leaf.

        ``loss`` must be a scalar produced on this tape (or a leaf, in
        which case its own grad is simply seeded with 1). Calling this
        twice without resetting grads accumulates, by design.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if not loss.is_leaf:
            produced = any(loss is o for outs, _, _ in self.entries for o in outs)
            if not produced:
                raise ValueError("loss was not produced on this tape")
        adjoint = {id(loss): np.ones_like(loss.data)}
        _leaf_accumulate(loss, adjoint.get(id(loss)))
        for outs, inputs, vjp in reversed(self.entries):
            gs = tuple(adjoint.pop(id(o), None) for o in outs)
            if all(g is None for g in gs):
                continue
            grads = vjp(gs[0]) if len(outs) == 1 else vjp(gs)
            for inp, g in zip(inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if inp.is_leaf:
                    _leaf_accumulate(inp, g)
                else:
                    k = id(inp)
                    adjoint[k] = g if k not in adjoint else adjoint[k] + g


def _leaf_accumulate(t, g):
    if g is None or not (t.is_leaf and t.requires_grad):
        return
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad += g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "is_leaf")

    def __init__(self, data, requires_grad=False, _leaf=True):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.is_leaf = _leaf

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _lift(other, self.dtype))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(values, dtype=np.float32, requires_grad=False):
    """Create a leaf tensor (copies the input values)."""
    return Tensor(np.array(values, dtype=dtype), requires_grad=requires_grad)


def constant(values, dtype=np.float32):
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=False)


def _lift(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _record(data, inputs, vjp):
    on_tape = _active_tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=on_tape, _leaf=False)
    if on_tape:
        _active_tape.entries.append(((out,), inputs, vjp))
    return out


def _record_multi(datas, inputs, vjp):
    on_tape = _active_tape is not None and any(t.requires_grad for t in inputs)
    outs = tuple(Tensor(d, requires_grad=on_tape, _leaf=False) for d in datas)
    if on_tape:
        _active_tape.entries.append((outs, inputs, vjp))
    return outs


def _needs(inputs):
    return tuple(t.requires_grad for t in inputs)


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not broadcast")


# ---------------------------------------------------------------------------
# elementwise ops

def add(a, b):
    _check_broadcast(a, b, "add")
    na, nb = _needs((a, b))
    ash, bsh = a.data.shape, b.data.shape

    def vjp(g):
        return (_unbroadcast(g, ash) if na else None,
                _unbroadcast(g, bsh) if nb else None)

    return _record(a.data + b.data, (a, b), vjp)


def sub(a, b):
    _check_broadcast(a, b, "sub")
    na, nb = _needs((a, b))
    ash, bsh = a.data.shape, b.data.shape

    def vjp(g):
        return (_unbroadcast(g, ash) if na else None,
                _unbroadcast(-g, bsh) if nb else None)

    return _record(a.data - b.data, (a, b), vjp)


def mul(a, b):
    _check_broadcast(a, b, "mul")
    na, nb = _needs((a, b))
    ash, bsh = a.data.shape, b.data.shape
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g * bd, ash) if na else None,
                _unbroadcast(g * ad, bsh) if nb else None)

    return _record(ad * bd, (a, b), vjp)


def scale(a, s):
    s = float(s)

    def vjp(g):
        return (g * s,)

    return _record(a.data * a.dtype.type(s), (a,), vjp)


def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record(out, (a,), vjp)


def tanh(a):
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _record(out, (a,), vjp)


def log(a):
    ad = a.data

    def vjp(g):
        return (g / ad,)

    return _record(np.log(ad), (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra / reductions

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}")
    na, nb = _needs((a, b))
    ad, bd = a.data, b.data

    def vjp(g):
        return (g @ bd.T if na else None,
                ad.T @ g if nb else None)

    return _record(ad @ bd, (a, b), vjp)


def tsum(a, axis=None, keepdims=False):
    ash = a.data.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, ash).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, ash).copy(),)

    return _record(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(a, axis=-1):
    """Numerically stable softmax (max-subtraction). Rejects non-finite input."""
    x = a.data
    if x.shape[axis] < 1:
        raise ValueError("softmax needs at least one entry")
    if not np.isfinite(x).all():
        raise ValueError("softmax input contains NaN or Inf")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _record(out, (a,), vjp)


# ---------------------------------------------------------------------------
# shape surgery

def reshape(a, shape):
    ash = a.data.shape

    def vjp(g):
        return (g.reshape(ash),)

    return _record(a.data.reshape(shape), (a,), vjp)


def permute(a, axes):
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return _record(a.data.transpose(axes), (a,), vjp)


def concat(tensors, axis=-1):
    tensors = tuple(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    needs = _needs(tensors)
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        parts = np.split(g, splits, axis=axis)
        return tuple(p if n else None for p, n in zip(parts, needs))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def stack(tensors, axis=1):
    tensors = tuple(tensors)

    def vjp(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple(parts[i] for i in range(len(tensors)))

    return _record(np.stack([t.data for t in tensors], axis=axis), tensors, vjp)


def split(a, size, axis):
    """Split into equal chunks of ``size`` along ``axis`` (multi-output op)."""
    n = a.data.shape[axis]
    if n % size != 0:
        raise ValueError(f"cannot split axis of length {n} into chunks of {size}")
    pieces = np.split(a.data, n // size, axis=axis)
    shapes = [p.shape for p in pieces]
    dt = a.dtype

    def vjp(gs):
        filled = [g if g is not None else np.zeros(s, dtype=dt)
                  for g, s in zip(gs, shapes)]
        return (np.concatenate(filled, axis=axis),)

    return _record_multi(pieces, (a,), vjp)


# ---------------------------------------------------------------------------
# indexed ops

def embed(table, idx):
    """Row lookup ``table[idx]``; gradient scatter-adds into the table."""
    idx = np.asarray(idx)
    tsh = table.data.shape

    def vjp(g):
        gt = np.zeros(tsh, dtype=g.dtype)
        np.add.at(gt, idx, g)
        return (gt,)

    return _record(table.data[idx], (table,), vjp)


def pick(a, idx):
    """Per-row element selection: out[i] = a[i, idx[i]]."""
    idx = np.asarray(idx)
    rows = np.arange(a.data.shape[0])
    ash = a.data.shape

    def vjp(g):
        ga = np.zeros(ash, dtype=g.dtype)
        ga[rows, idx] = g
        return (ga,)

    return _record(a.data[rows, idx], (a,), vjp)


# ---------------------------------------------------------------------------
# convolution

def conv2d(x, k, stride=1, padding=0):
    """Batched 2-D cross-correlation, channels-last.

    x: (B, H, W, C), k: (O, C, kh, kw); stride may be an int or (sh, sw).
    Output is (B, H', W', O) with H' = floor((H + 2p - kh)/sh) + 1, same
    for W'. Internally an im2col GEMM; column extraction and the input-
    gradient scatter stay contiguous in the channel axis.
    """
    sh, sw = (stride, stride) if isinstance(stride, int) else stride
    p = padding
    B, H, W, C = x.data.shape
    O, C2, kh, kw = k.data.shape
    if C != C2:
        raise ValueError(f"conv2d channel mismatch: input {C}, kernels {C2}")
    if H + 2 * p < kh or W + 2 * p < kw:
        raise ValueError(f"conv2d kernel {kh}x{kw} larger than padded input {H + 2 * p}x{W + 2 * p}")
    oh = (H + 2 * p - kh) // sh + 1
    ow = (W + 2 * p - kw) // sw + 1

    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0))) if p else x.data
    cols = np.empty((B, oh, ow, kh * kw * C), dtype=x.data.dtype)
    pos = 0
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, pos:pos + C] = xp[:, i:i + oh * sh:sh, j:j + ow * sw:sw, :]
            pos += C
    flat = cols.reshape(B * oh * ow, kh * kw * C)
    # kernels (O, C, kh, kw) -> (kh*kw*C, O) matching the column order
    w2 = np.ascontiguousarray(k.data.transpose(2, 3, 1, 0)).reshape(kh * kw * C, O)
    out = (flat @ w2).reshape(B, oh, ow, O)
    nx, nk = _needs((x, k))

    def vjp(g):
        g2 = g.reshape(B * oh * ow, O)
        gk = None
        if nk:
            gw2 = flat.T @ g2
            gk = gw2.reshape(kh, kw, C, O).transpose(3, 2, 0, 1).copy()
        gx = None
        if nx:
            gcols = (g2 @ w2.T).reshape(B, oh, ow, kh * kw * C)
            gxp = np.zeros((B, H + 2 * p, W + 2 * p, C), dtype=g.dtype)
            pos = 0
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + oh * sh:sh, j:j + ow * sw:sw, :] += \
                        gcols[:, :, :, pos:pos + C]
                    pos += C
            gx = gxp[:, p:H + p, p:W + p, :] if p else gxp
        return (gx, gk)

    return _record(out, (x, k), vjp)


# ---------------------------------------------------------------------------
# recurrent cell

def gru_core(xp, h, u_z, u_r, u_h):
    """GRU state update from a precomputed input projection.

    xp is [Wz x + bz, Wr x + br, Wh x + bh] concatenated to (B, 3H).
      z  = sigmoid(xp_z + h Uz)
      r  = sigmoid(xp_r + h Ur)
      hb = tanh(xp_h + (r*h) Uh)
      h' = (1-z)*h + z*hb
    Single fused tape entry; the hand-derived backward rule is covered
    by the finite-difference suites.
    """
    Hdim = h.data.shape[1]
    if xp.data.shape[1] != 3 * Hdim:
        raise ValueError(f"gru_core expects xp width {3 * Hdim}, got {xp.data.shape[1]}")
    hd = h.data
    xpd = xp.data
    z = _sig(xpd[:, :Hdim] + hd @ u_z.data)
    r = _sig(xpd[:, Hdim:2 * Hdim] + hd @ u_r.data)
    rh = r * hd
    hb = np.tanh(xpd[:, 2 * Hdim:] + rh @ u_h.data)
    out = (1.0 - z) * hd + z * hb
    nxp, nh, nuz, nur, nuh = _needs((xp, h, u_z, u_r, u_h))
    uzd, urd, uhd = u_z.data, u_r.data, u_h.data

    def vjp(g):
        a_z = g * (hb - hd) * z * (1.0 - z)
        a_h = g * z * (1.0 - hb * hb)
        d_rh = a_h @ uhd.T
        a_r = d_rh * hd * r * (1.0 - r)
        gxp = None
        if nxp:
            gxp = np.concatenate([a_z, a_r, a_h], axis=1)
        gh = None
        if nh:
            gh = g * (1.0 - z) + d_rh * r + a_r @ urd.T + a_z @ uzd.T
        guz = hd.T @ a_z if nuz else None
        gur = hd.T @ a_r if nur else None
        guh = rh.T @ a_h if nuh else None
        return (gxp, gh, guz, gur, guh)

    return _record(out, (xp, h, u_z, u_r, u_h), vjp)


def _sig(x):
    # overflowing exp(-x) saturates to inf and the quotient to 0, which is
    # the correct limit; suppress the spurious warning
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def gru_sequence(xp_all, h0, u_z, u_r, u_h, reverse=False):
    """Run a GRU over a whole (B, N, 3H) projected input sequence.

    One fused tape entry covering all N steps: the forward loop stores
    the per-step gate activations and the backward rule runs truncated-
    free BPTT over them. Semantics per step match gru_core exactly.
    Returns the (B, N, H) stacked states (state j corresponds to input
    column j regardless of direction).
    """
    B, N, threeH = xp_all.data.shape
    Hd = h0.data.shape[1]
    if N == 0:
        raise ValueError("gru_sequence needs a non-empty sequence")
    if threeH != 3 * Hd:
        raise ValueError(f"gru_sequence expects last dim {3 * Hd}, got {threeH}")
    uzd, urd, uhd = u_z.data, u_r.data, u_h.data
    xpd = xp_all.data
    order = range(N - 1, -1, -1) if reverse else range(N)

    states = np.empty((B, N, Hd), dtype=xpd.dtype)
    zs = np.empty_like(states)
    rs = np.empty_like(states)
    hbs = np.empty_like(states)
    prevs = np.empty_like(states)
    h = h0.data
    for j in order:
        xj = xpd[:, j, :]
        z = _sig(xj[:, :Hd] + h @ uzd)
        r = _sig(xj[:, Hd:2 * Hd] + h @ urd)
        hb = np.tanh(xj[:, 2 * Hd:] + (r * h) @ uhd)
        prevs[:, j, :] = h
        h = (1.0 - z) * h + z * hb
        states[:, j, :] = h
        zs[:, j, :] = z
        rs[:, j, :] = r
        hbs[:, j, :] = hb

    nxp, nh0, nuz, nur, nuh = _needs((xp_all, h0, u_z, u_r, u_h))

    def vjp(g):
        gxp = np.zeros((B, N, 3 * Hd), dtype=g.dtype) if nxp else None
        guz = np.zeros_like(uzd) if nuz else None
        gur = np.zeros_like(urd) if nur else None
        guh = np.zeros_like(uhd) if nuh else None
        carry = np.zeros((B, Hd), dtype=g.dtype)
        for j in reversed(order):
            gh = g[:, j, :] + carry
            z, r, hb, hp = zs[:, j, :], rs[:, j, :], hbs[:, j, :], prevs[:, j, :]
            a_z = gh * (hb - hp) * z * (1.0 - z)
            a_h = gh * z * (1.0 - hb * hb)
            d_rh = a_h @ uhd.T
            a_r = d_rh * hp * r * (1.0 - r)
            if nxp:
                gxp[:, j, :Hd] = a_z
                gxp[:, j, Hd:2 * Hd] = a_r
                gxp[:, j, 2 * Hd:] = a_h
            if guz is not None:
                guz += hp.T @ a_z
            if gur is not None:
                gur += hp.T @ a_r
            if guh is not None:
                guh += (r * hp).T @ a_h
            carry = gh * (1.0 - z) + d_rh * r + a_r @ urd.T + a_z @ uzd.T
        gh0 = carry if nh0 else None
        return (gxp, gh0, guz, gur, guh)

    return _record(states, (xp_all, h0, u_z, u_r, u_h), vjp)
