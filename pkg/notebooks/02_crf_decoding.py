"""
A linear-chain CRF over BIEOS tags
==================================

Emission scores come from the encoder; transitions are a (K+1) x K matrix
whose last row scores the first tag. This walk-through checks the forward
recursion against brute-force enumeration and shows what constrained
decoding changes.
"""

# %%
import itertools

import numpy as np

from rdcnn import crf
from rdcnn.corpus import TAGS, decode_bieos

rng = np.random.default_rng(0)
n, k = 4, 3
emissions = rng.normal(size=(n, k))
transitions = rng.normal(size=(k + 1, k))

# %% [markdown]
# The log-partition sums over all k**n paths. For a short chain we can
# enumerate them outright.

# %%
scores = [crf.score_path(emissions, p, transitions) for p in itertools.product(range(k), repeat=n)]
print("enumerated", np.log(np.sum(np.exp(scores))))
print("forward   ", crf.log_partition(emissions, transitions))

# %%
unary, pair, log_z = crf.marginals(emissions, transitions)
print("per-position marginals\n", unary.round(3))
print("rows sum to one:", np.allclose(unary.sum(axis=1), 1.0))

# %% [markdown]
# With the full tag set, unconstrained Viterbi may return a path that
# starts with "I-b", which no well-formed annotation produces. The span
# decoder repairs it anyway; constrained decoding rules it out up front.

# %%
K = len(TAGS)
emissions = np.full((3, K), -2.0)
emissions[0, TAGS.index("I-b")] = 3.0
emissions[1, TAGS.index("E-b")] = 1.0
emissions[2, TAGS.index("O")] = 1.0
A = np.zeros((K + 1, K))
for constrained in (False, True):
    path, score = crf.viterbi(emissions, A, constrained=constrained)
    tags = [TAGS[i] for i in path]
    print(constrained, tags, round(score, 3), decode_bieos(tags))
