"""Sequence accuracy, edit distance and lexicon correction."""


def edit_distance(a, b):
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1,
                           cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_edit_distance(pred, target):
    denom = max(len(pred), len(target), 1)
    return edit_distance(pred, target) / denom


def sequence_accuracy(preds, targets):
    """Fraction of exact caseless matches."""
    if len(preds) != len(targets):
        raise ValueError("prediction / target count mismatch")
    if not preds:
        return 0.0
    hits = sum(1 for p, t in zip(preds, targets) if p.lower() == t.lower())
    return hits / len(preds)


def lexicon_correct(pred, lexicon):
    """Replace a prediction by the nearest lexicon word under edit
    distance; ties break to the lexicographically smallest word."""
    if not lexicon:
        raise ValueError("empty lexicon")
    best = min(lexicon, key=lambda w: (edit_distance(pred, w), w))
    return best
