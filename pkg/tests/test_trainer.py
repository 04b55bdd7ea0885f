import numpy as np
import pytest

from rdcnn import encoder, nn, trainer
from rdcnn.config import TrainConfig
from rdcnn.corpus import EntitySpan, EntityType, Record
from rdcnn.dictionary import Lexicon
from rdcnn.encoder import CharVocab
from rdcnn.trainer import AdamState, adam_step, collate, make_batches, predict

from conftest import random_batch, randomize, tiny_config

B, S = EntityType.BODY, EntityType.SYMPTOM
EXAMPLE = Record("腹平坦，未见腹壁静脉曲张。", [EntitySpan(0, 0, B), EntitySpan(6, 7, B), EntitySpan(8, 11, S)])


def test_batch_sizes_and_determinism():
    clauses = [("abc"[: i % 3 + 1], []) for i in range(5)]
    cfg = TrainConfig(batch_size=2)
    batches = make_batches(clauses, None, cfg, seed=4)
    assert [len(b) for b in batches] == [2, 2, 1]
    again = make_batches(clauses, None, cfg, seed=4)
    assert all(np.array_equal(a.char_ids, b.char_ids) for a, b in zip(batches, again))


def test_padding_and_mask():
    (batch,) = make_batches([("abc", []), ("abcde", [])], None, TrainConfig(), seed=0)
    assert batch.char_ids.shape == (2, 5)
    assert sorted(batch.mask.sum(axis=1)) == [3, 5]
    assert np.all(batch.char_ids[batch.mask == 0] == encoder.PAD)


def test_clause_cap():
    with pytest.raises(ValueError, match="clause 1 .* above the cap of 4"):
        make_batches([("ab", []), ("abcde", [])], None, TrainConfig(max_len=4), seed=0)


def test_batch_features_come_from_lexicon():
    (batch,) = make_batches([("xab", [])], Lexicon({"ab": "disease"}), TrainConfig(), seed=0)
    names = [encoder.FEATURE_VOCAB[i] for i in batch.feat_ids[0]]
    assert names == ["None", "B-d", "E-d"]


def adam_config(**kw):
    return TrainConfig(**kw)


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState(), adam_config())
    assert np.array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step():
    p = {"w": np.array([0.0])}
    state = AdamState()
    adam_step(p, {"w": np.array([2.0])}, state, adam_config())
    assert state.t == 1
    assert p["w"][0] == pytest.approx(-0.001 * 2 / (2 + 1e-8), rel=1e-12)
    assert p["w"][0] == pytest.approx(-0.000999999995, abs=1e-15)


def test_adam_matches_scalar_recurrence():
    rng = np.random.default_rng(0)
    gs = rng.normal(size=10)
    p = {"w": np.array([0.3])}
    state = AdamState()
    w, m, v = 0.3, 0.0, 0.0
    for t, g in enumerate(gs, 1):
        adam_step(p, {"w": np.array([g])}, state, adam_config())
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.001 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert p["w"][0] == pytest.approx(w, rel=1e-12)


def test_adam_decreases_quadratic():
    p = {"w": np.array([3.0, -1.0])}
    state = AdamState()
    cfg = adam_config(lr=0.05)
    for _ in range(200):
        adam_step(p, {"w": 2 * p["w"]}, state, cfg)
    assert np.sum(p["w"] ** 2) < 1e-2


def test_adam_rejects_non_finite():
    p = {"w": np.array([1.0])}
    state = AdamState()
    with pytest.raises(FloatingPointError, match="w"):
        adam_step(p, {"w": np.array([np.nan])}, state, adam_config())
    assert state.t == 0 and p["w"][0] == 1.0


def test_debiased_momentum():
    assert trainer.debiased_momentum(0.99, 1) == pytest.approx(0.0, abs=1e-12)
    assert trainer.debiased_momentum(0.99, 10**6) == pytest.approx(0.99)


def test_padding_does_not_change_loss():
    rng = np.random.default_rng(1)
    cfg = tiny_config()
    params = randomize(encoder.init_params(cfg, 9, rng), rng)
    batch = random_batch(rng, [4, 6], 9, 21)
    examples = [
        trainer.Example("", batch.char_ids[i, :k], batch.feat_ids[i, :k], batch.tags[i, :k])
        for i, k in enumerate(batch.lengths)
    ]
    for mode in (nn.TRAIN, nn.INFER):
        tight, g1, _ = trainer.loss_and_grads(params, cfg, collate(examples), mode)
        loose, g2, _ = trainer.loss_and_grads(params, cfg, collate(examples, pad_to=11), mode)
        assert tight == loose
        assert all(np.array_equal(g1[k], g2[k]) for k in g1)


def test_loss_is_mean_over_clauses():
    rng = np.random.default_rng(2)
    cfg = tiny_config()
    params = randomize(encoder.init_params(cfg, 9, rng), rng)
    batch = random_batch(rng, [5, 3], 9, 21)
    mean, _, _ = trainer.loss_and_grads(params, cfg, batch, nn.INFER)
    single = [
        trainer.loss_and_grads(
            params,
            cfg,
            collate([trainer.Example("", batch.char_ids[i, :k], batch.feat_ids[i, :k], batch.tags[i, :k])]),
            nn.INFER,
        )[0]
        for i, k in enumerate(batch.lengths)
    ]
    assert mean == pytest.approx(sum(single) / 2, rel=1e-12)


def test_overfit_single_record_and_predict():
    lex = Lexicon({"静脉曲张": S})
    cfg = TrainConfig(epochs=100, char_dropout=0.0)
    model, history = trainer.train([EXAMPLE], lex, cfg, callback=lambda e, m, h: h.mean_loss <= 0.01)
    assert history[-1].mean_loss <= 0.01
    assert predict(model, lex, EXAMPLE.text) == EXAMPLE.entities


def test_zero_learning_rate_freezes_loss():
    cfg = tiny_config(lr=0.0, epochs=3, batch_size=8)
    _, history = trainer.train([EXAMPLE], None, cfg)
    losses = [h.mean_loss for h in history]
    # Running statistics still move, but train-mode loss reads batch statistics only.
    assert losses[0] == losses[1] == losses[2]


def test_training_is_deterministic():
    cfg = tiny_config(epochs=2, batch_size=1)
    m1, h1 = trainer.train([EXAMPLE], None, cfg)
    m2, h2 = trainer.train([EXAMPLE], None, cfg)
    assert [h.mean_loss for h in h1] == [h.mean_loss for h in h2]
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)
    m3, _ = trainer.train([EXAMPLE], None, cfg.replace(seed=1))
    assert not np.array_equal(m1.params["proj.weight"], m3.params["proj.weight"])


def test_history_csv():
    _, history = trainer.train([EXAMPLE], None, tiny_config(epochs=2))
    lines = trainer.history_csv(history).splitlines()
    assert lines[0] == "epoch,mean_loss,seconds" and len(lines) == 3
    assert lines[1].startswith("1,")


def test_predict_edge_cases():
    model, _ = trainer.train([EXAMPLE], None, tiny_config(epochs=1))
    assert predict(model, None, "") == []
    out = predict(model, Lexicon(), "，，。")
    assert all(0 <= s.start <= s.end < 3 for s in out)
    out = predict(model, None, "未知的字，腹")
    assert all(a.end < b.start for a, b in zip(out, out[1:]))


def test_predictions_never_overlap():
    rng = np.random.default_rng(3)
    model, _ = trainer.train([EXAMPLE], None, tiny_config(epochs=1))
    params = randomize(model.params, rng)
    model = trainer.Model(model.config, model.vocab, params)
    chars = list("腹平坦未见壁静脉曲张，")
    for _ in range(30):
        text = "".join(rng.choice(chars, size=int(rng.integers(1, 25))))
        spans = predict(model, None, text)
        assert all(a.end < b.start for a, b in zip(spans, spans[1:]))
        assert all(0 <= s.start <= s.end < len(text) for s in spans)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty"):
        trainer.train([], None, tiny_config())


def test_unknown_chars_map_to_unk():
    vocab = CharVocab.from_texts(["ab"])
    assert list(vocab.ids("az")) == [2, encoder.UNK]
