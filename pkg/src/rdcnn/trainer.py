"""Batching, Adam, the training loop and end-to-end prediction."""

from __future__ import annotations

import csv
import io
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from rdcnn import crf, encoder, nn
from rdcnn.config import TrainConfig
from rdcnn.corpus import TAG_INDEX, TAGS, EntitySpan, Record, decode_bieos, encode_bieos, split_clauses
from rdcnn.dictionary import Lexicon, dict_features
from rdcnn.encoder import PAD, UNK, CharVocab

log = logging.getLogger(__name__)

DETERMINISM_ENV = "RDCC_DETERMINISM"


class TrainingError(FloatingPointError):
    pass


# --------------------------------------------------------------------------
# Examples and batches


@dataclass
class Example:
    """One clause with its ids and gold tag indices."""

    text: str
    char_ids: np.ndarray
    feat_ids: np.ndarray
    tags: np.ndarray


def clause_examples(records: Iterable[Record]) -> list[tuple[str, list[EntitySpan]]]:
    return [(clause.text, spans) for record in records for clause, spans in record.clauses()]


def encode_examples(clauses, lexicon: Lexicon | None, vocab: CharVocab, max_len: int = 512) -> list[Example]:
    lexicon = lexicon if lexicon is not None else Lexicon()
    out = []
    for i, (text, spans) in enumerate(clauses):
        if not text:
            continue
        if len(text) > max_len:
            raise ValueError(f"clause {i} has {len(text)} characters, above the cap of {max_len}")
        tags = np.array([TAG_INDEX[t] for t in encode_bieos(spans, len(text))], dtype=np.int64)
        feats = encoder.feature_ids(dict_features(text, lexicon))
        out.append(Example(text, vocab.ids(text), feats, tags))
    return out


@dataclass
class Batch:
    char_ids: np.ndarray  # [b, n_max], PAD beyond each length
    feat_ids: np.ndarray  # [b, n_max]
    tags: np.ndarray  # [b, n_max], 0 beyond each length
    mask: np.ndarray  # [b, n_max], 1 on real positions
    lengths: np.ndarray  # [b]

    def __len__(self) -> int:
        return len(self.lengths)

    def packed(self):
        """Real positions only: ``(char_ids, feat_ids, tags)`` each of shape ``[sum(lengths)]``."""
        m = self.mask.astype(bool)
        return self.char_ids[m], self.feat_ids[m], self.tags[m]


def collate(examples: Sequence[Example], pad_to: int | None = None) -> Batch:
    lengths = np.array([len(ex.tags) for ex in examples], dtype=np.int64)
    n_max = max(int(lengths.max()), pad_to or 0)
    b = len(examples)
    chars = np.full((b, n_max), PAD, dtype=np.int64)
    feats = np.full((b, n_max), PAD, dtype=np.int64)
    tags = np.zeros((b, n_max), dtype=np.int64)
    mask = np.zeros((b, n_max), dtype=np.int8)
    for i, ex in enumerate(examples):
        k = lengths[i]
        chars[i, :k], feats[i, :k], tags[i, :k], mask[i, :k] = ex.char_ids, ex.feat_ids, ex.tags, 1
    return Batch(chars, feats, tags, mask, lengths)


def batches_for_epoch(examples: Sequence[Example], batch_size: int, seed) -> list[Batch]:
    order = np.random.default_rng(seed).permutation(len(examples))
    return [collate([examples[j] for j in order[i : i + batch_size]]) for i in range(0, len(order), batch_size)]


def make_batches(clauses, lexicon: Lexicon | None, config: TrainConfig, seed, vocab: CharVocab | None = None):
    """Shuffle clauses ``[(text, spans), ...]`` with ``seed`` and cut padded batches."""
    if not clauses:
        raise ValueError("cannot batch an empty corpus")
    vocab = vocab or CharVocab.from_texts(text for text, _ in clauses)
    examples = encode_examples(clauses, lexicon, vocab, config.max_len)
    return batches_for_epoch(examples, config.batch_size, seed)


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update of ``params`` in place.

    Raises ``FloatingPointError`` without touching anything when a gradient
    is not finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}; Adam step aborted")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= config.lr * (m / corr1) / (np.sqrt(v / corr2) + config.adam_eps)


# --------------------------------------------------------------------------
# Loss


def debiased_momentum(momentum: float, step: int) -> float:
    """Per-step momentum that makes running averages unbiased by their initial value.

    Using ``1 - (1 - m) / (1 - m**t)`` at step ``t`` turns the running
    statistic into a normalized exponentially weighted mean of the batch
    statistics seen so far (step 1 copies the batch statistic outright).
    """
    return 1.0 - (1.0 - momentum) / (1.0 - momentum**step)


def loss_and_grads(params, config: TrainConfig, batch: Batch, mode=nn.TRAIN, char_ids=None, momentum=None):
    """Mean per-clause CRF negative log-likelihood of ``batch`` and its gradients.

    Returns ``(loss, grads, stats)``. ``char_ids`` overrides the packed char
    ids (used for UNK dropout).
    """
    packed_chars, packed_feats, packed_tags = batch.packed()
    if char_ids is not None:
        packed_chars = char_ids
    lengths = tuple(int(k) for k in batch.lengths)
    scores, cache, stats = encoder.forward(params, config, packed_chars, packed_feats, lengths, mode, momentum)
    transitions = params["crf.transitions"]
    b = len(lengths)
    total = 0.0
    dscores = np.empty_like(scores)
    dtrans = np.zeros_like(transitions)
    start = 0
    for k in lengths:
        sl = slice(start, start + k)
        loss, d_emit, d_trans = crf.nll_and_grad(scores[sl], packed_tags[sl], transitions)
        total += loss
        dscores[sl] = d_emit
        dtrans += d_trans
        start += k
    grads = encoder.backward(dscores / b, cache)
    grads["crf.transitions"] = dtrans / b
    return total / b, grads, stats


# --------------------------------------------------------------------------
# Model, training and prediction


@dataclass
class Model:
    config: TrainConfig
    vocab: CharVocab
    params: dict
    tags: tuple[str, ...] = TAGS

    def scores(self, char_ids, feat_ids, lengths):
        return encoder.forward(self.params, self.config, char_ids, feat_ids, lengths, nn.INFER)[0]


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    seconds: float


def history_csv(history: Sequence[EpochStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "mean_loss", "seconds"])
    for h in history:
        writer.writerow([h.epoch, repr(h.mean_loss), f"{h.seconds:.3f}"])
    return buf.getvalue()


@contextmanager
def determinism(enabled: bool | None = None):
    """Pin BLAS to one thread when enabled (default: ``RDCC_DETERMINISM=1``)."""
    if enabled is None:
        enabled = os.environ.get(DETERMINISM_ENV, "") == "1"
    if not enabled:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def train(
    corpus: Sequence[Record],
    lexicon: Lexicon | None,
    config: TrainConfig,
    callback=None,
) -> tuple[Model, list[EpochStats]]:
    """Fit a model on ``corpus``.

    ``callback(epoch, model, stats)`` runs after every epoch; returning
    ``True`` stops training early.
    """
    clauses = [c for c in clause_examples(corpus) if c[0]]
    if not clauses:
        raise ValueError("cannot train on an empty corpus")
    vocab = CharVocab.from_texts(text for text, _ in clauses)
    examples = encode_examples(clauses, lexicon, vocab, config.max_len)
    rng = np.random.default_rng([config.seed, 0])
    params = encoder.init_params(config, len(vocab), rng)
    model = Model(config, vocab, params)
    trainable = encoder.trainable_names(params)
    state = AdamState()
    dropout_rng = np.random.default_rng([config.seed, 1])
    history = []
    with determinism():
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            total, count = 0.0, 0
            for bi, batch in enumerate(batches_for_epoch(examples, config.batch_size, [config.seed, 2, epoch])):
                chars = batch.packed()[0]
                if config.char_dropout > 0:
                    drop = dropout_rng.random(chars.shape) < config.char_dropout
                    chars = np.where(drop, UNK, chars)
                momentum = debiased_momentum(config.bn_momentum, state.t + 1)
                loss, grads, stats = loss_and_grads(params, config, batch, nn.TRAIN, chars, momentum)
                if not np.isfinite(loss):
                    raise TrainingError(f"loss diverged at epoch {epoch}, batch {bi}")
                try:
                    adam_step(params, {k: grads[k] for k in trainable}, state, config)
                except FloatingPointError as exc:
                    raise TrainingError(f"epoch {epoch}, batch {bi}: {exc}") from exc
                params.update(stats)
                total += loss * len(batch)
                count += len(batch)
            entry = EpochStats(epoch, total / count, time.perf_counter() - t0)
            history.append(entry)
            log.info("epoch %d loss %.6f (%.2fs)", epoch, entry.mean_loss, entry.seconds)
            if callback is not None and callback(epoch, model, entry):
                break
    return model, history


def predict_clauses(model: Model, lexicon: Lexicon | None, texts: Sequence[str]) -> list[list[EntitySpan]]:
    """Spans for each clause text, in clause coordinates."""
    lexicon = lexicon if lexicon is not None else Lexicon()
    keep = [i for i, t in enumerate(texts) if t]
    out: list[list[EntitySpan]] = [[] for _ in texts]
    if not keep:
        return out
    chars = np.concatenate([model.vocab.ids(texts[i]) for i in keep])
    feats = np.concatenate([encoder.feature_ids(dict_features(texts[i], lexicon)) for i in keep])
    lengths = tuple(len(texts[i]) for i in keep)
    scores = model.scores(chars, feats, lengths)
    transitions = model.params["crf.transitions"]
    start = 0
    for i, k in zip(keep, lengths):
        path, _ = crf.viterbi(scores[start : start + k], transitions, model.config.constrained, model.tags)
        out[i] = decode_bieos([model.tags[j] for j in path])
        start += k
    return out


def predict(model: Model, lexicon: Lexicon | None, text: str) -> list[EntitySpan]:
    """Entity spans of ``text`` in document coordinates."""
    clauses = split_clauses(text)
    per_clause = predict_clauses(model, lexicon, [c.text for c in clauses])
    return [span.shift(c.offset) for c, spans in zip(clauses, per_clause) for span in spans]
