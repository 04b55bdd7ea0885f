"""Embedding layer and the two-branch convolutional encoder.

The left branch is a stack of residual dilated blocks (block ``i`` uses
dilation ``d_b ** i``); the right branch is one standard convolution with
batch normalization. Their outputs are summed and projected to one score
per tag.

Parameters live in a flat ``dict`` keyed by dotted names so they can be
optimized and serialized uniformly. Running batch-norm statistics share the
dict but are not trainable (see :func:`trainable_names`).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from rdcnn import nn
from rdcnn.config import TrainConfig
from rdcnn.corpus import TAGS
from rdcnn.dictionary import FEATURES

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
FEATURE_VOCAB: tuple[str, ...] = (PAD_TOKEN,) + FEATURES
FEATURE_INDEX = {f: i for i, f in enumerate(FEATURE_VOCAB)}


class CharVocab:
    """Character to id mapping with PAD = 0 and UNK = 1."""

    def __init__(self, chars: Iterable[str] = ()):
        self.itos = [PAD_TOKEN, UNK_TOKEN]
        self.stoi = {}
        for ch in chars:
            if ch not in self.stoi:
                self.stoi[ch] = len(self.itos)
                self.itos.append(ch)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "CharVocab":
        return cls(ch for text in texts for ch in text)

    def __len__(self) -> int:
        return len(self.itos)

    def ids(self, text: str) -> np.ndarray:
        return np.array([self.stoi.get(ch, UNK) for ch in text], dtype=np.int64)

    @property
    def chars(self) -> list[str]:
        return self.itos[2:]


def feature_ids(features: Sequence[str]) -> np.ndarray:
    return np.array([FEATURE_INDEX[f] for f in features], dtype=np.int64)


# --------------------------------------------------------------------------
# Parameters

STAT_SUFFIXES = (".running_mean", ".running_var")


def trainable_names(params) -> list[str]:
    return [k for k in params if not k.endswith(STAT_SUFFIXES)]


def block_prefix(i: int) -> str:
    return f"left.block{i + 1}."


def init_params(config: TrainConfig, n_chars: int, rng: np.random.Generator, n_tags: int = len(TAGS)) -> dict:
    """Build freshly initialized parameters for the architecture ``config`` selects.

    ``config.branches`` picks the left (residual dilated), right (standard
    conv) or both branches; ``config.residual = False`` drops the identity
    skip inside every block.
    """
    config.validate()
    p = {}
    for name, rows, dim in (("embed.chars", n_chars, config.d_x), ("embed.features", len(FEATURE_VOCAB), config.d_d)):
        limit = np.sqrt(3.0 / dim)
        table = rng.uniform(-limit, limit, size=(rows, dim))
        table[PAD] = 0.0
        p[name] = table
    embed = config.d_x + config.d_d
    if config.branches in ("left", "both"):
        c_in = embed
        for i in range(config.n_r):
            block = nn.init_block_params(c_in, config.f_d, config.w_d, rng)
            p.update({block_prefix(i) + k: v for k, v in block.items()})
            c_in = config.f_d
    if config.branches in ("right", "both"):
        p["right.conv.weight"] = nn.glorot_uniform((config.w_s, embed, config.f_s), rng)
        p["right.conv.bias"] = np.zeros(config.f_s)
        p["right.bn.gamma"] = np.ones(config.f_s)
        p["right.bn.beta"] = np.zeros(config.f_s)
        p["right.bn.running_mean"] = np.zeros(config.f_s)
        p["right.bn.running_var"] = np.ones(config.f_s)
    p["proj.weight"] = nn.glorot_uniform((config.hidden_size, n_tags), rng)
    p["proj.bias"] = np.zeros(n_tags)
    p["crf.transitions"] = np.zeros((n_tags + 1, n_tags))
    return p


def _sub(params, prefix):
    return {k[len(prefix) :]: v for k, v in params.items() if k.startswith(prefix)}


# --------------------------------------------------------------------------
# Embedding


def embed_forward(char_ids, feat_ids, chars_table, features_table):
    char_ids = np.asarray(char_ids, dtype=np.int64)
    feat_ids = np.asarray(feat_ids, dtype=np.int64)
    if char_ids.shape != feat_ids.shape:
        raise ValueError(f"char ids {char_ids.shape} and feature ids {feat_ids.shape} differ in shape")
    for ids, table, what in ((char_ids, chars_table, "char"), (feat_ids, features_table, "feature")):
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise IndexError(f"{what} id out of range [0, {table.shape[0]})")
    e = np.concatenate([chars_table[char_ids], features_table[feat_ids]], axis=-1)
    return e, (char_ids, feat_ids, chars_table.shape, features_table.shape)


def embed_backward(de, cache):
    """Scatter-add row gradients into the two tables; PAD rows stay zero."""
    char_ids, feat_ids, chars_shape, features_shape = cache
    d_x = chars_shape[1]
    d_chars = np.zeros(chars_shape)
    d_features = np.zeros(features_shape)
    np.add.at(d_chars, char_ids, de[..., :d_x])
    np.add.at(d_features, feat_ids, de[..., d_x:])
    d_chars[PAD] = 0.0
    d_features[PAD] = 0.0
    return d_chars, d_features


def embed(char_ids, feat_ids, chars_table, features_table):
    return embed_forward(char_ids, feat_ids, chars_table, features_table)[0]


# --------------------------------------------------------------------------
# Convolutional encoder


def encode_forward(e, params, config: TrainConfig, mode=nn.INFER, lengths=None, momentum=None):
    """Scores ``[N, K]`` for packed embeddings ``e`` of shape ``[N, d_x + d_d]``.

    Returns ``(scores, cache, stats)``; ``stats`` maps running-statistic
    names to their updated values (train mode only). ``momentum`` overrides
    ``config.bn_momentum`` for this call.
    """
    momentum = config.bn_momentum if momentum is None else momentum
    embed_dim = config.d_x + config.d_d
    if e.ndim != 2 or e.shape[1] != embed_dim:
        raise ValueError(f"encoder expects [n, {embed_dim}] input, got {e.shape}")
    bn_kw = dict(alpha=config.leaky_alpha, momentum=momentum, eps=config.bn_eps)
    stats = {}
    left = right = None
    block_caches = []
    right_cache = None
    if config.branches in ("left", "both"):
        left = e
        for i, dilation in enumerate(config.dilations):
            prefix = block_prefix(i)
            left, cache, block_stats = nn.residual_block_forward(
                left, _sub(params, prefix), dilation, mode, lengths, config.residual, **bn_kw
            )
            block_caches.append(cache)
            stats.update({prefix + k: v for k, v in block_stats.items()})
    if config.branches in ("right", "both"):
        a, conv_cache = nn.conv1d_forward(e, params["right.conv.weight"], params["right.conv.bias"], 1, lengths)
        right, bn_cache = nn.batch_norm_forward(
            a, params["right.bn.gamma"], params["right.bn.beta"],
            params["right.bn.running_mean"], params["right.bn.running_var"],
            mode, momentum, config.bn_eps,
        )  # fmt: skip
        right_cache = (conv_cache, bn_cache)
        if bn_cache[4] is not None:
            stats["right.bn.running_mean"], stats["right.bn.running_var"] = bn_cache[4]
    if left is None:
        hidden = right
    elif right is None:
        hidden = left
    else:
        hidden = left + right
    scores = hidden @ params["proj.weight"] + params["proj.bias"]
    cache = (hidden, block_caches, right_cache, params["proj.weight"])
    return scores, cache, stats


def encode_backward(dscores, cache):
    hidden, block_caches, right_cache, proj_weight = cache
    grads = {
        "proj.weight": hidden.T @ dscores,
        "proj.bias": dscores.sum(axis=0),
    }
    dhidden = dscores @ proj_weight.T
    de = 0.0
    if block_caches:
        dleft = dhidden
        for i in range(len(block_caches) - 1, -1, -1):
            dleft, block_grads = nn.residual_block_backward(dleft, block_caches[i])
            grads.update({block_prefix(i) + k: v for k, v in block_grads.items()})
        de = dleft
    if right_cache is not None:
        conv_cache, bn_cache = right_cache
        da, grads["right.bn.gamma"], grads["right.bn.beta"] = nn.batch_norm_backward(dhidden, bn_cache)
        dright, grads["right.conv.weight"], grads["right.conv.bias"] = nn.conv1d_backward(da, conv_cache)
        de = de + dright
    return de, grads


def encode(e, params, config: TrainConfig, mode=nn.INFER, lengths=None):
    return encode_forward(e, params, config, mode, lengths)[0]


def forward(params, config: TrainConfig, char_ids, feat_ids, lengths=None, mode=nn.INFER, momentum=None):
    """Packed ids -> tag scores; returns ``(scores, cache, stats)``."""
    e, embed_cache = embed_forward(char_ids, feat_ids, params["embed.chars"], params["embed.features"])
    scores, enc_cache, stats = encode_forward(e, params, config, mode, lengths, momentum)
    return scores, (embed_cache, enc_cache), stats


def backward(dscores, cache) -> dict:
    embed_cache, enc_cache = cache
    de, grads = encode_backward(dscores, enc_cache)
    grads["embed.chars"], grads["embed.features"] = embed_backward(de, embed_cache)
    return grads
