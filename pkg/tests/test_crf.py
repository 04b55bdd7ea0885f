import math

import numpy as np
import pytest

from rdcnn import crf, nn
from rdcnn.corpus import TAGS

from oracles import all_paths, path_score
from oracles import crf_brute_force as brute_force
from oracles import random_crf_case as random_case


def test_score_path_example():
    emissions = np.array([[0.5, -1.0]])
    transitions = np.array([[0.0, 0.0], [0.0, 0.0], [0.1, 0.2]])
    assert crf.score_path(emissions, [0], transitions) == pytest.approx(0.6)


def test_score_path_trivial():
    rng = np.random.default_rng(0)
    emissions = rng.normal(size=(4, 3))
    zero_a = np.zeros((4, 3))
    for path in ([0, 1, 2, 0], [2, 2, 2, 2]):
        assert crf.score_path(emissions, path, zero_a) == pytest.approx(emissions[range(4), path].sum())
        assert crf.score_path(np.zeros((4, 3)), path, zero_a) == 0.0
    with pytest.raises(ValueError):
        crf.score_path(np.zeros((0, 3)), [], zero_a)


def test_score_path_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        emissions, transitions = random_case(rng, 4, 3)
        path = list(rng.integers(0, 3, 4))
        assert crf.score_path(emissions, path, transitions) == pytest.approx(path_score(emissions, path, transitions))


def test_log_partition_uniform():
    assert crf.log_partition(np.zeros((2, 3)), np.zeros((4, 3))) == pytest.approx(2 * math.log(3), abs=1e-12)
    assert crf.log_partition(np.zeros((2, 3)), np.zeros((4, 3))) == pytest.approx(2.1972246, abs=1e-7)


def test_log_partition_single_step():
    rng = np.random.default_rng(1)
    emissions, transitions = random_case(rng, 1, 4)
    expected = math.log(np.exp(transitions[-1] + emissions[0]).sum())
    assert crf.log_partition(emissions, transitions) == pytest.approx(expected, abs=1e-12)


def test_log_partition_matches_enumeration():
    rng = np.random.default_rng(2)
    emissions, transitions = random_case(rng, 3, 3)
    _, _, log_z, _, _, _ = brute_force(emissions, transitions)
    assert abs(crf.log_partition(emissions, transitions) - log_z) <= 1e-10


def test_log_partition_overflow_safe():
    emissions = np.full((5, 3), 800.0)
    value = crf.log_partition(emissions, np.zeros((4, 3)))
    assert value == pytest.approx(4000 + 5 * math.log(3))


def test_normalization_and_bounds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, k = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        emissions, transitions = random_case(rng, n, k)
        log_z = crf.log_partition(emissions, transitions)
        scores = np.array([crf.score_path(emissions, p, transitions) for p in all_paths(n, k)])
        assert abs(np.exp(scores - log_z).sum() - 1.0) <= 1e-9
        if k ** n == 1:
            assert scores[0] == pytest.approx(log_z, abs=1e-12)
        else:
            assert np.all(scores < log_z)


def test_marginals_match_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n, k = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        emissions, transitions = random_case(rng, n, k)
        _, _, log_z, unary, pair, _ = brute_force(emissions, transitions)
        got_unary, got_pair, got_z = crf.marginals(emissions, transitions)
        assert np.abs(got_unary.sum(axis=1) - 1).max() <= 1e-10
        assert np.abs(got_unary - unary).max() <= 1e-9
        assert np.abs(got_pair - pair).max() <= 1e-9
        assert abs(got_z - log_z) <= 1e-9


def test_nll_single_tag():
    loss, d_emit, d_trans = crf.nll_and_grad(np.array([[1.3], [-0.2]]), [0, 0], np.array([[0.5], [2.0]]))
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.abs(d_emit).max() <= 1e-12 and np.abs(d_trans).max() <= 1e-12


def test_nll_uniform():
    for gold in ([0, 0], [1, 2], [2, 1]):
        loss, _, _ = crf.nll_and_grad(np.zeros((2, 3)), gold, np.zeros((4, 3)))
        assert loss == pytest.approx(2 * math.log(3), abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_nll_gradients_finite_differences(seed):
    rng = np.random.default_rng(10 + seed)
    emissions, transitions = random_case(rng, 4, 3)
    gold = rng.integers(0, 3, size=4)
    p = {"emissions": emissions, "transitions": transitions}
    _, d_emit, d_trans = crf.nll_and_grad(emissions, gold, transitions)

    def f():
        return crf.nll_and_grad(p["emissions"], gold, p["transitions"])[0]

    assert nn.grad_check(f, p, {"emissions": d_emit, "transitions": d_trans}) <= 1e-6


def test_viterbi_zero_transitions_is_argmax():
    rng = np.random.default_rng(5)
    emissions = rng.normal(size=(6, 4))
    path, score = crf.viterbi(emissions, np.zeros((5, 4)))
    assert path == list(emissions.argmax(axis=1))
    assert score == pytest.approx(emissions.max(axis=1).sum())


def test_viterbi_matches_enumeration():
    rng = np.random.default_rng(6)
    emissions, transitions = random_case(rng, 5, 4)
    _, scores, _, _, _, best = brute_force(emissions, transitions)
    path, score = crf.viterbi(emissions, transitions)
    assert path == best
    assert abs(score - scores.max()) <= 1e-12
    assert score == crf.score_path(emissions, path, transitions)


def test_viterbi_tie_breaks_to_lower_index():
    path, _ = crf.viterbi(np.zeros((3, 3)), np.zeros((4, 3)))
    assert path == [0, 0, 0]
    emissions = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])
    assert crf.viterbi(emissions, np.zeros((4, 3)))[0] == [0, 1]


def test_viterbi_dominates_gold_and_shift_invariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n, k = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        emissions, transitions = random_case(rng, n, k)
        path, score = crf.viterbi(emissions, transitions)
        gold = rng.integers(0, k, size=n)
        assert score >= crf.score_path(emissions, gold, transitions)
        t, c = int(rng.integers(n)), float(rng.normal() * 3)
        shifted = emissions.copy()
        shifted[t] += c
        path2, score2 = crf.viterbi(shifted, transitions)
        assert path2 == path
        assert score2 == pytest.approx(score + c, abs=1e-10)
        log_z = crf.log_partition(emissions, transitions)
        assert crf.log_partition(shifted, transitions) == pytest.approx(log_z + c, abs=1e-10)


def test_allowed_transitions():
    mask = crf.allowed_transitions()
    idx = {t: i for i, t in enumerate(TAGS)}
    start = len(TAGS)
    assert not mask[idx["O"], idx["I-b"]]
    assert not mask[idx["B-b"], idx["B-s"]]
    assert not mask[idx["B-b"], idx["O"]]
    assert not mask[start, idx["I-d"]] and not mask[start, idx["E-d"]]
    assert mask[idx["B-b"], idx["I-b"]] and mask[idx["I-b"], idx["E-b"]]
    assert mask[idx["E-b"], idx["S-s"]] and mask[start, idx["O"]]
    assert not mask[idx["I-b"], idx["E-s"]]


def test_constrained_viterbi_matches_valid_path_enumeration():
    rng = np.random.default_rng(8)
    tags = ["O", "B-b", "I-b", "E-b", "S-b"]
    mask = crf.allowed_transitions(tags)
    for _ in range(30):
        emissions, transitions = random_case(rng, 4, 5)
        valid = []
        for p in all_paths(4, 5):
            prev = [5] + p[:-1]
            if all(mask[a, b] for a, b in zip(prev, p)):
                valid.append((crf.score_path(emissions, p, transitions), p))
        best_score = max(s for s, _ in valid)
        best = min(p for s, p in valid if s == best_score)
        path, score = crf.viterbi(emissions, transitions, constrained=True, tags=tags)
        assert path == best and score == pytest.approx(best_score, abs=1e-12)


def test_constrained_avoids_o_then_inside():
    tags = ["O", "B-b", "I-b", "E-b", "S-b"]
    emissions = np.array([[5.0, 0, 0, 0, 0], [0, 0, 5.0, 0, 1.0]])
    transitions = np.zeros((6, 5))
    assert crf.viterbi(emissions, transitions)[0] == [0, 2]
    assert crf.viterbi(emissions, transitions, constrained=True, tags=tags)[0] == [0, 4]


def test_constrained_unsatisfiable():
    with pytest.raises(ValueError, match="constraints"):
        crf.viterbi(np.zeros((2, 2)), np.zeros((3, 2)), constrained=True, tags=["I-b", "E-b"])
