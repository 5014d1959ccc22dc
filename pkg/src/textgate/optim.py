"""Adadelta optimizer (accumulated-gradient / accumulated-update form)."""

import numpy as np


class NonFiniteGradient(RuntimeError):
    """Raised when a parameter gradient contains NaN or Inf; the step is rejected."""


class Adadelta:
    """Standard Adadelta over a name -> Tensor parameter dict.

    State per parameter: running average of squared gradients and of
    squared updates. ``learning_rate`` scales the final delta (the
    classic schedule keeps it at 1.0 and drops it late in training).
    """

    def __init__(self, params, rho=0.95, eps=1e-6):
        self.params = params
        self.rho = float(rho)
        self.eps = float(eps)
        self.acc_grad = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.acc_update = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self, learning_rate=1.0):
        # validate first so a bad gradient rejects the whole step
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NonFiniteGradient(f"non-finite gradient for parameter '{name}'")
        rho, eps = self.rho, self.eps
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            eg = self.acc_grad[name]
            eu = self.acc_update[name]
            eg *= rho
            eg += (1.0 - rho) * g * g
            delta = -np.sqrt(eu + eps) / np.sqrt(eg + eps) * g
            eu *= rho
            eu += (1.0 - rho) * delta * delta
            p.data += learning_rate * delta

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self):
        """Flat name -> array view of the optimizer state, for checkpointing."""
        out = {}
        for n in self.params:
            out[f"opt.acc_grad/{n}"] = self.acc_grad[n]
            out[f"opt.acc_update/{n}"] = self.acc_update[n]
        return out

    def load_state_arrays(self, arrays):
        for n in self.params:
            for prefix, store in (("opt.acc_grad/", self.acc_grad),
                                  ("opt.acc_update/", self.acc_update)):
                key = prefix + n
                if key not in arrays:
                    raise KeyError(f"optimizer state missing '{key}'")
                src = arrays[key]
                if src.shape != store[n].shape:
                    raise ValueError(f"optimizer state shape mismatch for '{key}': "
                                     f"{src.shape} vs {store[n].shape}")
                store[n][...] = src
