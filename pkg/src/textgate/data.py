"""Synthetic word-image rendering, noise perturbations and batch sampling.

Everything here is a pure function of explicit seeds: the same spec
always produces the same pixels, which the determinism and persistence
guarantees of the training harness rely on.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import vocab
from .font5x7 import BITMAPS, GLYPH_H, GLYPH_W

IMG_H = 32
IMG_W = 100
FOREGROUND = 0.9
BACKGROUND = 0.1
GLYPH_SPACING = 1   # pixels between glyphs at any scale
MAX_SCALE = 3


@dataclass(frozen=True)
class RenderSpec:
    """One word image: the word, a seed, and jitter amplitudes.

    ``pixel_flip`` replaces that fraction of pixels with random black or
    white after drawing, breaking strokes; it is what gives the desk
    dataset an accuracy ceiling below 100%.
    """
    word: str
    seed: int = 0
    fg_jitter: float = 0.35     # per-glyph intensity wobble around 0.9
    offset_x: int = 8           # max horizontal shift off center, pixels
    offset_y: int = 5
    bg_noise: float = 0.35      # uniform background noise around 0.1
    pixel_flip: float = 0.16    # fraction of pixels destroyed outright


def _fit_scale(n_chars):
    for s in range(MAX_SCALE, 0, -1):
        if n_chars * GLYPH_W * s + (n_chars - 1) * GLYPH_SPACING <= IMG_W:
            return s
    return 0


_SCALED_MASKS = {}


def _glyph_mask(c, scl):
    key = (c, scl)
    mask = _SCALED_MASKS.get(key)
    if mask is None:
        mask = np.kron(BITMAPS[c], np.ones((scl, scl), dtype=bool))
        _SCALED_MASKS[key] = mask
    return mask


def max_renderable_length():
    n = 1
    while _fit_scale(n + 1) > 0:
        n += 1
    return n


def render_word(spec):
    """Render a RenderSpec to a (32, 100) float64 image in [0, 1].

    The word is drawn from the built-in 5x7 font, scaled by the largest
    factor in {3, 2, 1} that fits, and centered with a seeded offset.
    The rng draw order (background, offsets, per-glyph intensity) is
    fixed; changing it would silently change every dataset.
    """
    word = spec.word
    if not word:
        raise ValueError("cannot render an empty word")
    for c in word:
        if c not in BITMAPS:
            raise ValueError(f"no glyph for character {c!r}")
    scl = _fit_scale(len(word))
    if scl == 0:
        raise ValueError(f"word {word!r} is too long to render at 100px "
                         f"(limit {max_renderable_length()} characters)")

    rng = np.random.default_rng(spec.seed)
    img = np.full((IMG_H, IMG_W), BACKGROUND, dtype=np.float64)
    if spec.bg_noise > 0:
        img += spec.bg_noise * rng.uniform(-1.0, 1.0, size=(IMG_H, IMG_W))

    block_w = len(word) * GLYPH_W * scl + (len(word) - 1) * GLYPH_SPACING
    block_h = GLYPH_H * scl
    x0 = (IMG_W - block_w) // 2
    y0 = (IMG_H - block_h) // 2
    if spec.offset_x > 0:
        x0 += int(rng.integers(-spec.offset_x, spec.offset_x + 1))
    if spec.offset_y > 0:
        y0 += int(rng.integers(-spec.offset_y, spec.offset_y + 1))
    x0 = int(np.clip(x0, 0, IMG_W - block_w))
    y0 = int(np.clip(y0, 0, IMG_H - block_h))

    x = x0
    for c in word:
        intensity = FOREGROUND
        if spec.fg_jitter > 0:
            intensity += spec.fg_jitter * rng.uniform(-1.0, 1.0)
        mask = _glyph_mask(c, scl)
        region = img[y0:y0 + block_h, x:x + GLYPH_W * scl]
        region[mask] = intensity
        x += GLYPH_W * scl + GLYPH_SPACING
    img = np.clip(img, 0.0, 1.0)
    if spec.pixel_flip > 0:
        flip = rng.random((IMG_H, IMG_W)) < spec.pixel_flip
        values = (rng.random((IMG_H, IMG_W)) < 0.5).astype(img.dtype)
        img = np.where(flip, values, img)
    return img


# ---------------------------------------------------------------------------
# evaluation-time perturbations

def apply_gaussian_blur(img, sigma):
    """Separable Gaussian blur, kernel truncated at 3*sigma, edges clamped."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    radius = max(1, int(np.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(img, ((radius, radius), (0, 0)), mode="edge")
    rows = sum(kernel[i] * padded[i:i + img.shape[0]] for i in range(2 * radius + 1))
    padded = np.pad(rows, ((0, 0), (radius, radius)), mode="edge")
    out = sum(kernel[i] * padded[:, i:i + img.shape[1]] for i in range(2 * radius + 1))
    return np.clip(out, 0.0, 1.0)


def apply_salt_pepper(img, p, seed):
    """Each pixel independently replaced by 0 or 1 (equal odds) with prob p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("flip probability must be in [0, 1]")
    rng = np.random.default_rng(seed)
    flip = rng.random(img.shape) < p
    value = (rng.random(img.shape) < 0.5).astype(img.dtype)
    return np.where(flip, value, img)


def apply_occlusion(img, fraction, seed):
    """Fill a seeded axis-aligned rectangle of ~fraction the area with background."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("occlusion fraction must be in [0, 1]")
    out = img.copy()
    if fraction == 0.0:
        return out
    h, w = img.shape
    rng = np.random.default_rng(seed)
    area = fraction * h * w
    aspect = rng.uniform(0.5, 2.0)
    rh = int(np.clip(round(np.sqrt(area * aspect)), 1, h))
    rw = int(np.clip(round(area / rh), 1, w))
    if rh * rw < area:  # rounding undershoot: widen if possible
        rw = int(np.clip(round(area / rh + 0.5), 1, w))
    y = int(rng.integers(0, h - rh + 1))
    x = int(rng.integers(0, w - rw + 1))
    out[y:y + rh, x:x + rw] = BACKGROUND
    return out


NOISE_KINDS = ("gaussian-blur", "salt-pepper", "occlusion")


def perturb(img, kind, level, seed):
    if kind == "gaussian-blur":
        return apply_gaussian_blur(img, level)
    if kind == "salt-pepper":
        return apply_salt_pepper(img, level, seed)
    if kind == "occlusion":
        return apply_occlusion(img, level, seed)
    raise ValueError(f"unknown noise kind {kind!r} (have {NOISE_KINDS})")


def content_seed(*parts):
    """Stable seed from mixed ints / floats / strings, for per-sample noise."""
    entropy = []
    for p in parts:
        if isinstance(p, str):
            entropy.extend(p.encode())
        elif isinstance(p, float):
            entropy.append(int(np.float64(p).view(np.uint64)))
        else:
            entropy.append(int(p) & 0xFFFFFFFFFFFFFFFF)
    return np.random.SeedSequence(entropy).generate_state(1)[0]


# ---------------------------------------------------------------------------
# word sources and batches

class WordSampler:
    """Mixes dictionary words with uniform-random strings.

    ``mix_random`` is the probability that a draw is a meaningless
    random string rather than a dictionary word; random strings mirror
    the weak-correlated side of the gate's training signal.
    """

    def __init__(self, words, mix_random=0.5, random_len=(3, 8)):
        if not words and mix_random < 1.0:
            raise ValueError("word source is empty")
        self.words = list(words)
        self.mix_random = float(mix_random)
        self.random_len = random_len

    def sample(self, rng):
        """Returns (word, kind) with kind in {'dict', 'random'}."""
        if rng.random() < self.mix_random:
            lo, hi = self.random_len
            n = int(rng.integers(lo, hi + 1))
            chars = rng.integers(0, len(vocab.CHARS), size=n)
            return "".join(vocab.CHARS[i] for i in chars), "random"
        return self.words[int(rng.integers(0, len(self.words)))], "dict"


@dataclass
class Batch:
    images: np.ndarray        # (B, 32, 100)
    words: list
    tokens_in: np.ndarray     # (B, L+1) decoder inputs: EOS start, then shifted target
    targets: np.ndarray       # (B, L+1) target tokens with EOS at position len
    attn_mask: np.ndarray     # (B, L+1) 1.0 for supervised prediction steps
    gate_targets: np.ndarray  # (B, L)
    gate_mask: np.ndarray     # (B, L) 1.0 for supervised gate steps
    lengths: np.ndarray       # (B,)


def make_batch(words, labeler, render_template, seeds, dtype=np.float32,
               images=None):
    """Render words and assemble padded teacher-forcing arrays.

    ``labeler`` maps a word to its gate target vector; ``seeds`` gives
    one render seed per word. Pass pre-rendered ``images`` to skip
    rendering (teacher-forced passes over an existing evaluation set).
    """
    n = len(words)
    lengths = np.array([len(w) for w in words], dtype=np.int64)
    lmax = int(lengths.max())
    render = images is None
    if render:
        images = np.empty((n, IMG_H, IMG_W), dtype=dtype)
    else:
        images = np.ascontiguousarray(images, dtype=dtype)
    tokens_in = np.full((n, lmax + 1), vocab.EOS, dtype=np.int32)
    targets = np.full((n, lmax + 1), vocab.EOS, dtype=np.int32)
    attn_mask = np.zeros((n, lmax + 1), dtype=dtype)
    gate_targets = np.zeros((n, lmax), dtype=dtype)
    gate_mask = np.zeros((n, lmax), dtype=dtype)
    for i, (word, seed) in enumerate(zip(words, seeds)):
        if render:
            images[i] = render_word(replace(render_template, word=word, seed=int(seed)))
        toks = vocab.encode_word(word)
        L = len(toks)
        tokens_in[i, 1:L + 1] = toks  # position 0 stays EOS = start token
        targets[i, :L] = toks         # position L stays EOS
        attn_mask[i, :L + 1] = 1.0
        if labeler is not None:
            gate_targets[i, :L] = labeler(word)
            gate_mask[i, :L] = 1.0
    return Batch(images, list(words), tokens_in, targets, attn_mask,
                 gate_targets, gate_mask, lengths)


def sample_batch(sampler, labeler, render_template, batch_size, stream_seed, step,
                 dtype=np.float32):
    """Deterministic training batch: (stream_seed, step) fixes everything."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([stream_seed & 0xFFFFFFFF, step]))
    words = [sampler.sample(rng)[0] for _ in range(batch_size)]
    seeds = rng.integers(0, 2 ** 62, size=batch_size)
    return make_batch(words, labeler, render_template, seeds, dtype=dtype)


def render_test_set(words, render_template, test_seed, dtype=np.float32):
    """Render a fixed evaluation set; per-word seeds are content-keyed so
    the images do not depend on list order."""
    images = np.empty((len(words), IMG_H, IMG_W), dtype=dtype)
    for i, w in enumerate(words):
        seed = content_seed(test_seed, w)
        images[i] = render_word(replace(render_template, word=w, seed=int(seed)))
    return images


# ---------------------------------------------------------------------------
# image export

def write_pgm(path, img):
    """8-bit binary PGM (P5), for eyeballing rendered samples."""
    data = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())
