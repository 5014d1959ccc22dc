"""Input validation helpers for the estimator API."""

import numpy as np

from . import vocab
from .data import IMG_H, IMG_W


def check_images(X):
    """Coerce to a float32 (n, 32, 100) array of finite values in [0, 1].

    Accepts a single (32, 100) image or a batch; anything else raises.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (IMG_H, IMG_W):
        raise ValueError(f"expected images shaped (n, {IMG_H}, {IMG_W}), "
                         f"got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty image batch")
    if not np.isfinite(X).all():
        raise ValueError("images contain NaN or Inf")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return X


def check_words(y, max_len=None):
    """Validate transcriptions: lowercase alphanumeric strings."""
    words = [str(w).lower() for w in y]
    if not words:
        raise ValueError("empty target list")
    for w in words:
        if not vocab.is_valid_word(w):
            raise ValueError(f"target {w!r} is not a non-empty [a-z0-9] string")
        if max_len is not None and len(w) > max_len:
            raise ValueError(f"target {w!r} longer than the decodable limit {max_len}")
    return words


def check_matching_lengths(X, y):
    if len(X) != len(y):
        raise ValueError(f"got {len(X)} images but {len(y)} targets")
