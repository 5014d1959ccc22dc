"""The 37-way output vocabulary: 26 letters, 10 digits, end-of-sequence."""

import numpy as np

CHARS = "abcdefghijklmnopqrstuvwxyz0123456789"
EOS = len(CHARS)          # reserved index 36
SIZE = len(CHARS) + 1     # 37 categories

_CHAR_TO_INDEX = {c: i for i, c in enumerate(CHARS)}


def char_to_index(c):
    try:
        return _CHAR_TO_INDEX[c]
    except KeyError:
        raise ValueError(f"character {c!r} is outside the recognizer vocabulary") from None


def index_to_char(i):
    if 0 <= i < len(CHARS):
        return CHARS[i]
    raise ValueError(f"index {i} has no character (EOS is {EOS})")


def encode_word(word):
    """Lowercased alphanumeric string -> int32 index array (no EOS appended)."""
    word = word.lower()
    return np.array([char_to_index(c) for c in word], dtype=np.int32)


def decode_tokens(tokens):
    """Index sequence -> string, stopping at the first EOS."""
    chars = []
    for t in tokens:
        if t == EOS:
            break
        chars.append(index_to_char(int(t)))
    return "".join(chars)


def is_valid_word(word):
    return len(word) > 0 and all(c in _CHAR_TO_INDEX for c in word)
