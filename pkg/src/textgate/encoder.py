"""Image encoder: strided conv blocks, height collapse, bidirectional GRUs.

A 32x100 glyph image passes through K conv blocks (conv -> bias ->
tanh, with an identity skip when a block keeps its channel count and
resolution), the remaining height is mean-pooled away, and the column
sequence runs through stacked bidirectional GRU layers. The output is
one feature vector per retained column; its length N is a pure
function of the widths and strides. Images flow channels-last.
"""

import numpy as np

from . import autodiff as ad
from .data import IMG_H, IMG_W

MIN_WIDTH = 4
KERNEL = 3


class ConvBlock:
    def __init__(self, bank, prefix, c_in, c_out, stride):
        self.stride = tuple(stride)
        self.c_in, self.c_out = c_in, c_out
        self.w = bank.weight(f"{prefix}/w", (c_out, c_in, KERNEL, KERNEL),
                             fan_in=c_in * KERNEL * KERNEL)
        self.b = bank.bias(f"{prefix}/b", (c_out,))
        self.skip = c_in == c_out and self.stride == (1, 1)

    def forward(self, x):
        y = ad.tanh(ad.add(ad.conv2d(x, self.w, stride=self.stride, padding=1), self.b))
        if self.skip:
            y = ad.add(y, x)
        return y


class GRUDirection:
    def __init__(self, bank, prefix, d_in, d_h):
        self.d_h = d_h
        self.w = bank.weight(f"{prefix}/w", (d_in, 3 * d_h))
        self.b = bank.bias(f"{prefix}/b", (3 * d_h,))
        self.u_z = bank.weight(f"{prefix}/u_z", (d_h, d_h))
        self.u_r = bank.weight(f"{prefix}/u_r", (d_h, d_h))
        self.u_h = bank.weight(f"{prefix}/u_h", (d_h, d_h))

    def cell(self, x, h):
        """One GRU step from a raw input vector."""
        xp = ad.add(ad.matmul(x, self.w), self.b)
        return ad.gru_core(xp, h, self.u_z, self.u_r, self.u_h)

    def run(self, seq, reverse=False):
        """Run over (B, N, d_in); returns the (B, N, d_h) state sequence."""
        batch, n, d_in = seq.data.shape
        flat = ad.add(ad.matmul(ad.reshape(seq, (batch * n, d_in)), self.w), self.b)
        xp_all = ad.reshape(flat, (batch, n, 3 * self.d_h))
        h0 = ad.constant(np.zeros((batch, self.d_h)), dtype=seq.dtype)
        return ad.gru_sequence(xp_all, h0, self.u_z, self.u_r, self.u_h,
                               reverse=reverse)


class BiRecurrentLayer:
    def __init__(self, bank, prefix, d_in, d_h):
        self.fwd = GRUDirection(bank, f"{prefix}/fwd", d_in, d_h)
        self.bwd = GRUDirection(bank, f"{prefix}/bwd", d_in, d_h)

    def forward(self, seq):
        f = self.fwd.run(seq)
        b = self.bwd.run(seq, reverse=True)
        return ad.concat([f, b], axis=2)


def conv_output_len(size, stride):
    return (size + 2 - KERNEL) // stride + 1


class Encoder:
    def __init__(self, bank, cfg):
        channels = cfg.conv_channels
        strides = cfg.conv_strides
        if 2 * cfg.rnn_hidden != cfg.feat_dim:
            raise ValueError("feat_dim must equal 2 * rnn_hidden")

        h, w = IMG_H, IMG_W
        self.blocks = []
        c_in = 1
        for i, (c_out, stride) in enumerate(zip(channels, strides)):
            self.blocks.append(ConvBlock(bank, f"enc.conv{i}", c_in, c_out, stride))
            h = conv_output_len(h, stride[0])
            w = conv_output_len(w, stride[1])
            c_in = c_out
        if w < MIN_WIDTH:
            raise ValueError(f"encoder strides reduce width to {w} columns "
                             f"(need at least {MIN_WIDTH})")
        self.out_h, self.seq_len = h, w
        self.conv_dim = channels[-1]

        self.rnn = []
        d_in = self.conv_dim
        for i in range(cfg.rnn_layers):
            self.rnn.append(BiRecurrentLayer(bank, f"enc.rnn{i}", d_in, cfg.rnn_hidden))
            d_in = 2 * cfg.rnn_hidden
        self.feat_dim = d_in

    def forward(self, images):
        """(B, 32, 100) leaf tensor -> (B, N, feat_dim) feature sequence."""
        batch = images.data.shape[0]
        x = ad.reshape(images, (batch, IMG_H, IMG_W, 1))
        for block in self.blocks:
            x = block.forward(x)
        if self.out_h > 1:  # collapse whatever height the strides left over
            seq = ad.scale(ad.tsum(x, axis=1), 1.0 / self.out_h)
        else:
            seq = ad.reshape(x, (batch, self.seq_len, self.conv_dim))
        for layer in self.rnn:
            seq = layer.forward(seq)
        return seq
