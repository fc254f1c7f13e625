"""Pure-Python fallback for the compiled distance kernels."""

import numpy as np


def levenshtein(a, b):
    """Unit-cost edit distance between two integer id sequences.

    Insert, delete and substitute all cost 1; operates on whole ids, so a
    substitution of one tag for another is a single edit regardless of the
    tags' spellings.
    """
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    cur = [0] * (m + 1)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            if prev[j - 1] + cost < best:
                best = prev[j - 1] + cost
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def levenshtein_many(a, bs):
    """Edit distance from one id sequence to each sequence in `bs`."""
    out = np.empty(len(bs), dtype=np.int64)
    for i, b in enumerate(bs):
        out[i] = levenshtein(a, b)
    return out
