"""Named parameter creation with per-name seeded initialization.

Weights draw uniform from [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases
start at zero. Each tensor's init stream is keyed by (seed, name), so
adding or removing one component never shifts the init of another;
ablation arms that share a seed therefore share every common tensor
bit for bit.
"""

import numpy as np

from . import autodiff as ad


def name_seed(seed, name):
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *name.encode()])


class ParamBank:
    def __init__(self, seed, dtype=np.float32):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.tensors = {}  # insertion-ordered

    def _register(self, name, t):
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.tensors[name] = t
        return t

    def weight(self, name, shape, fan_in=None):
        fan = int(fan_in) if fan_in is not None else int(shape[0])
        bound = 1.0 / np.sqrt(fan)
        rng = np.random.default_rng(name_seed(self.seed, name))
        values = rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        return self._register(name, ad.Tensor(values, requires_grad=True))

    def bias(self, name, shape):
        values = np.zeros(shape, dtype=self.dtype)
        return self._register(name, ad.Tensor(values, requires_grad=True))
