"""Brute-force reference implementations shared by unit and acceptance tests.

Each one is written from the definition with plain loops, independently of
the library code it checks.
"""

import itertools
import math
import random

import numpy as np

from rdcnn import nn
from rdcnn.corpus import EntityType

# --------------------------------------------------------------------------
# CRF


def path_score(emissions, path, transitions):
    k = emissions.shape[1]
    total, prev = 0.0, k  # row k scores the first tag
    for t, tag in enumerate(path):
        total += transitions[prev, tag] + emissions[t, tag]
        prev = tag
    return total


def all_paths(n, k):
    return [list(p) for p in itertools.product(range(k), repeat=n)]


def crf_brute_force(emissions, transitions):
    """Scores of every path, the log-partition and the exact marginals."""
    n, k = emissions.shape
    paths = all_paths(n, k)
    scores = np.array([path_score(emissions, p, transitions) for p in paths])
    top = scores.max()
    log_z = top + math.log(np.exp(scores - top).sum())
    probs = np.exp(scores - log_z)
    unary = np.zeros((n, k))
    pair = np.zeros((k + 1, k))
    for prob, path in zip(probs, paths):
        prev = k
        for t, tag in enumerate(path):
            unary[t, tag] += prob
            pair[prev, tag] += prob
            prev = tag
    best = paths[int(np.argmax(scores))]  # first maximum = lexicographically smallest path
    return paths, scores, log_z, unary, pair, best


def random_crf_case(rng, n, k, scale=1.0):
    return rng.normal(size=(n, k)) * scale, rng.normal(size=(k + 1, k)) * scale


# --------------------------------------------------------------------------
# Convolution


def direct_conv(x, weight, bias, dilation):
    """Loop-level oracle of the tap-offset definition."""
    n, c_in = x.shape
    offsets = nn.tap_offsets(weight.shape[0], dilation)
    out = np.zeros((n, weight.shape[2]))
    for i in range(n):
        for k in range(weight.shape[2]):
            total = bias[k]
            for j, off in enumerate(offsets):
                if 0 <= i + off < n:
                    for c in range(c_in):
                        total += weight[j, c, k] * x[i + off, c]
            out[i, k] = total
    return out


def offsets_from_footnote(w, d):
    """Tap offsets written out per parity: odd w = 2l+1 spans -l..l, even w = 2l spans -l+1..l."""
    half = w // 2
    lo = -half if w % 2 else -half + 1
    return [j * d for j in range(lo, half + 1)]


# --------------------------------------------------------------------------
# Maximum matching


def fmm(text, entries):
    segs, i = [], 0
    while i < len(text):
        best = None
        for surface, etype in entries:
            if text.startswith(surface, i) and (best is None or len(surface) > len(best[0])):
                best = (surface, etype)
        if best:
            segs.append((i, i + len(best[0]) - 1, best[1]))
            i += len(best[0])
        else:
            segs.append((i, i, None))
            i += 1
    return segs


def bmm(text, entries):
    segs, j = [], len(text)
    while j > 0:
        best = None
        for surface, etype in entries:
            if text[:j].endswith(surface) and (best is None or len(surface) > len(best[0])):
                best = (surface, etype)
        if best:
            segs.insert(0, (j - len(best[0]), j - 1, best[1]))
            j -= len(best[0])
        else:
            segs.insert(0, (j - 1, j - 1, None))
            j -= 1
    return segs


def bdmm(text, entries):
    f, b = fmm(text, entries), bmm(text, entries)
    key = lambda segs: (len(segs), sum(s == e for s, e, _ in segs))  # noqa: E731
    return f if key(f) < key(b) else b


def random_lexicon_case(rng: random.Random):
    """Lexicon of at most 20 entries and a clause of at most 12 characters."""
    alphabet = "abcdefghij"[: rng.randint(2, 10)]
    entries = {}
    for _ in range(rng.randint(0, 20)):
        surface = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 4)))
        entries.setdefault(surface, rng.choice(list(EntityType)))
    text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
    return text, entries
