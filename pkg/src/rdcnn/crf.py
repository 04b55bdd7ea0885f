"""Linear-chain CRF over per-position tag scores.

Transition matrix ``A`` has shape ``[K + 1, K]``: row ``i < K`` scores the move
from tag ``i`` to each next tag, and the last row scores the first tag of a
sequence (the START row). There is no end transition.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from rdcnn.corpus import OUTSIDE, TAGS, parse_tag


def logsumexp(x, axis=None):
    """Overflow-safe log(sum(exp(x))) along ``axis``."""
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.item()


def _check(emissions, transitions):
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] == 0:
        raise ValueError(f"emissions must be a non-empty [n, K] array, got shape {emissions.shape}")
    k = emissions.shape[1]
    if transitions.shape != (k + 1, k):
        raise ValueError(f"transitions must have shape {(k + 1, k)}, got {transitions.shape}")
    return emissions


def score_path(emissions, tags: Sequence[int], transitions) -> float:
    emissions = _check(emissions, transitions)
    tags = np.asarray(tags, dtype=np.int64)
    if tags.shape != (emissions.shape[0],):
        raise ValueError(f"expected {emissions.shape[0]} tags, got {tags.shape}")
    start = transitions.shape[0] - 1
    prev = np.concatenate([[start], tags[:-1]])
    return float(transitions[prev, tags].sum() + emissions[np.arange(len(tags)), tags].sum())


def forward_scores(emissions, transitions) -> np.ndarray:
    """alpha[t, k]: log-sum of scores of all prefixes ending in tag k at t."""
    n, k = emissions.shape
    alpha = np.empty((n, k))
    alpha[0] = transitions[-1] + emissions[0]
    trans = transitions[:-1]
    for t in range(1, n):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    return alpha


def backward_scores(emissions, transitions) -> np.ndarray:
    """beta[t, k]: log-sum of scores of all suffixes after tag k at t."""
    n, k = emissions.shape
    beta = np.zeros((n, k))
    trans = transitions[:-1]
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(emissions, transitions) -> float:
    emissions = _check(emissions, transitions)
    return float(logsumexp(forward_scores(emissions, transitions)[-1]))


def marginals(emissions, transitions):
    """Per-position tag posteriors ``[n, K]`` and expected transition counts ``[K+1, K]``."""
    emissions = _check(emissions, transitions)
    alpha = forward_scores(emissions, transitions)
    beta = backward_scores(emissions, transitions)
    log_z = logsumexp(alpha[-1])
    unary = np.exp(alpha + beta - log_z)
    pair = np.zeros_like(transitions)
    pair[-1] = unary[0]
    if emissions.shape[0] > 1:
        scores = alpha[:-1, :, None] + transitions[None, :-1] + (emissions[1:] + beta[1:])[:, None, :]
        pair[:-1] = np.exp(scores - log_z).sum(axis=0)
    return unary, pair, float(log_z)


def nll_and_grad(emissions, gold: Sequence[int], transitions):
    """Negative log-likelihood of ``gold`` and its gradients.

    Returns ``(loss, d_emissions, d_transitions)``.
    """
    emissions = _check(emissions, transitions)
    gold = np.asarray(gold, dtype=np.int64)
    unary, pair, log_z = marginals(emissions, transitions)
    loss = log_z - score_path(emissions, gold, transitions)
    if not np.isfinite(loss) or not np.all(np.isfinite(unary)):
        raise FloatingPointError("non-finite value in CRF likelihood")
    n = len(gold)
    d_emit = unary
    d_emit[np.arange(n), gold] -= 1.0
    d_trans = pair
    prev = np.concatenate([[transitions.shape[0] - 1], gold[:-1]])
    np.add.at(d_trans, (prev, gold), -1.0)
    return loss, d_emit, d_trans


def allowed_transitions(tags: Sequence[str] = TAGS) -> np.ndarray:
    """Boolean ``[K+1, K]`` mask of BIEOS-legal moves (last row = START)."""
    parsed = [parse_tag(t) for t in tags]
    k = len(tags)
    mask = np.zeros((k + 1, k), dtype=bool)
    for i, src in enumerate(parsed + [(None, None)]):
        for j, (marker, etype) in enumerate(parsed):
            if src[0] in ("B", "I"):
                ok = marker in ("I", "E") and etype == src[1]
            else:  # START, O, E, S
                ok = marker in (OUTSIDE, "B", "S")
            mask[i, j] = ok
    return mask


def viterbi(emissions, transitions, constrained: bool = False, tags: Sequence[str] = TAGS):
    """Best tag path and its score.

    Ties go to the lower tag index. With ``constrained`` the transitions that
    break BIEOS (e.g. O -> I-x, B-x -> O, START -> E-x) are excluded; ``tags``
    names the columns for that purpose.
    """
    emissions = _check(emissions, transitions)
    n, k = emissions.shape
    trans = transitions
    if constrained:
        if len(tags) != k:
            raise ValueError(f"constrained decoding needs {k} tag names, got {len(tags)}")
        trans = np.where(allowed_transitions(tags), transitions, -np.inf)
    delta = trans[-1] + emissions[0]
    backptr = np.zeros((n, k), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + trans[:-1]
        backptr[t] = cand.argmax(axis=0)
        delta = cand[backptr[t], np.arange(k)] + emissions[t]
    last = int(delta.argmax())
    best = float(delta[last])
    if not np.isfinite(best):
        raise ValueError("no path satisfies the transition constraints")
    path = [last]
    for t in range(n - 1, 0, -1):
        path.append(int(backptr[t, path[-1]]))
    path.reverse()
    return path, score_path(emissions, path, transitions)


__all__ = [
    "allowed_transitions",
    "backward_scores",
    "forward_scores",
    "log_partition",
    "logsumexp",
    "marginals",
    "nll_and_grad",
    "score_path",
    "viterbi",
]
