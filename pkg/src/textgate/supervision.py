"""Gate supervision: character-pair statistics and per-word gate targets.

Two labeling strategies produce the target vector for the gate scores
of a word (position t scores the pair of characters t-1 and t, so
position 0 is always 0):

  * word-frequency: looks adjacent letter pairs up in a 26x26
    transition probability matrix counted over a dictionary,
  * root: marks the pairs inside occurrences of known multi-letter
    roots, then rescales so the maximum is 1.

Pairs touching a digit always score 0. A third, weak mode provides no
gate targets at all (the gate trains through the recognition loss only).
"""

import re
from importlib import resources as importlib_resources

import numpy as np

from . import autodiff as ad

N_LETTERS = 26
_A = ord("a")
_WORD_RE = re.compile(r"^[a-z0-9]+$")
_ROOT_RE = re.compile(r"^[a-z]{2,10}$")

SUPERVISION_MODES = ("weak", "word-frequency", "root")


def _read_lines(path):
    if path is None:
        return None
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


def _bundled(name):
    return importlib_resources.files("textgate.resources").joinpath(name).read_text(
        encoding="utf-8").splitlines()


def _parse_entries(lines):
    out = []
    for line in lines:
        entry = line.strip().lower()
        if not entry or entry.startswith("#"):
            continue
        out.append(entry)
    return out


def load_wordlist(path=None):
    """One word per line, '#' comments ignored; bundled list by default."""
    lines = _read_lines(path) if path else _bundled("words.txt")
    words = []
    for entry in _parse_entries(lines):
        if not _WORD_RE.match(entry):
            raise ValueError(f"bad dictionary entry {entry!r} (want lowercase alphanumerics)")
        words.append(entry)
    return words


def load_roots(path=None):
    lines = _read_lines(path) if path else _bundled("roots.txt")
    roots, seen = [], set()
    for entry in _parse_entries(lines):
        if not _ROOT_RE.match(entry):
            raise ValueError(f"bad root entry {entry!r} (want 2-10 lowercase letters)")
        if entry not in seen:
            seen.add(entry)
            roots.append(entry)
    return roots


def prepare_dictionary(words):
    """Lowercase, strip non-letters, drop singletons and duplicates."""
    out, seen = [], set()
    for w in words:
        w = re.sub(r"[^a-z]", "", w.lower())
        if len(w) >= 2 and w not in seen:
            seen.add(w)
            out.append(w)
    return out


def build_transition_matrix(words):
    """Count adjacent letter pairs over a prepared dictionary and
    normalize each row to conditional probabilities P(next | prev).
    Rows with no observed pair stay zero."""
    counts = np.zeros((N_LETTERS, N_LETTERS), dtype=np.float64)
    for w in prepare_dictionary(words):
        for a, b in zip(w, w[1:]):
            counts[ord(a) - _A, ord(b) - _A] += 1.0
    sums = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(sums > 0, counts / sums, 0.0)
    return matrix


def build_transition_matrix_maxnorm(words):
    """Alternative normalization by the global maximum count, for comparison."""
    counts = np.zeros((N_LETTERS, N_LETTERS), dtype=np.float64)
    for w in prepare_dictionary(words):
        for a, b in zip(w, w[1:]):
            counts[ord(a) - _A, ord(b) - _A] += 1.0
    top = counts.max()
    return counts / top if top > 0 else counts


def _check_word(word):
    word = word.lower()
    if not _WORD_RE.match(word):
        raise ValueError(f"cannot label {word!r}: expected lowercase alphanumerics")
    return word


def label_word_frequency(word, matrix):
    """Gate target from pair transition probabilities (first position 0,
    any pair involving a digit 0)."""
    word = _check_word(word)
    target = np.zeros(len(word), dtype=np.float64)
    for t in range(1, len(word)):
        a, b = word[t - 1], word[t]
        if a.isdigit() or b.isdigit():
            continue
        target[t] = matrix[ord(a) - _A, ord(b) - _A]
    return target


def label_root(word, roots, count_overlaps=True):
    """Gate target from root occurrences.

    A root occupying characters S..E marks the pairs (S,S+1)..(E-1,E),
    i.e. target positions S+1..E. Occurrences accumulate (every match
    position of every root when ``count_overlaps``, else at most one
    increment per position), then the vector is divided by its maximum
    so values land in [0, 1].
    """
    word = _check_word(word)
    target = np.zeros(len(word), dtype=np.float64)
    for root in roots:
        start = 0
        while True:
            s = word.find(root, start)
            if s < 0:
                break
            e = s + len(root) - 1
            if count_overlaps:
                target[s + 1:e + 1] += 1.0
            else:
                target[s + 1:e + 1] = np.maximum(target[s + 1:e + 1], 1.0)
            start = s + 1
    top = target.max()
    if top > 0:
        target /= top
    return target


def make_labeler(mode, dictionary_words=None, roots=None, matrix_norm="row",
                 count_overlaps=True):
    """Bind a supervision mode to a word -> gate-target function.

    Returns None for 'weak' (no targets; the gate loss is off). Results
    are memoized per word; treat the returned arrays as read-only.
    """
    if mode == "weak":
        return None
    if mode == "word-frequency":
        build = (build_transition_matrix if matrix_norm == "row"
                 else build_transition_matrix_maxnorm)
        matrix = build(dictionary_words or load_wordlist())
        base = lambda word: label_word_frequency(word, matrix)
    elif mode == "root":
        table = roots if roots is not None else load_roots()
        base = lambda word: label_root(word, table, count_overlaps=count_overlaps)
    else:
        raise ValueError(f"unknown supervision mode {mode!r} (have {SUPERVISION_MODES})")

    cache = {}

    def labeler(word):
        got = cache.get(word)
        if got is None:
            got = base(word)
            if len(cache) < 60_000:  # dictionary words repeat, random strings don't
                cache[word] = got
        return got

    return labeler


# ---------------------------------------------------------------------------
# losses

def gate_loss(scores, target):
    """Mean squared difference between gate scores and their targets.

    ``scores`` may be a Tensor (stays differentiable) or an array.
    """
    target = np.asarray(target)
    if isinstance(scores, ad.Tensor):
        if scores.data.shape != target.shape:
            raise ValueError(f"gate score / target length mismatch: "
                             f"{scores.data.shape} vs {target.shape}")
        diff = ad.sub(scores, ad.constant(target, dtype=scores.dtype))
        return ad.mean(ad.mul(diff, diff))
    scores = np.asarray(scores)
    if scores.shape != target.shape:
        raise ValueError(f"gate score / target length mismatch: "
                         f"{scores.shape} vs {target.shape}")
    return float(np.mean((scores - target) ** 2))


def total_loss(recognition_loss, g_loss, weight):
    """Combined objective: recognition loss plus ``weight`` times the gate
    loss. Weight 0 returns the recognition loss untouched (weak mode)."""
    if weight == 0 or g_loss is None:
        return recognition_loss
    if isinstance(recognition_loss, ad.Tensor):
        return ad.add(recognition_loss, ad.scale(g_loss, weight))
    return recognition_loss + weight * g_loss
