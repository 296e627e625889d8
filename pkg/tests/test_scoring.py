"""Scoring: class scores, predictions, fitness, correlation."""
import math

import numpy as np
import pytest

from promptevo.errors import DegenerateVarianceError, UnboundIdError
from promptevo.scoring import (
    CandidatePrompt,
    breakdown_from_scores,
    class_scores,
    fitness,
    pcc,
    predict,
)
from helpers import brute_force_breakdown, brute_force_scores, random_instance, store_from_parts


def test_identical_vector_scores_one():
    v = [0.3, -0.5, 0.81, 0.0]
    store = store_from_parts([v], [0], [v], 1)
    scores = class_scores(store, [(0,)])
    assert scores[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_mean_of_two_cosines():
    # image e0; texts at cosines 0.2 and 0.6 built in the (e0, e1, e2) frame
    t1 = [0.2, math.sqrt(1 - 0.04), 0.0]
    t2 = [0.6, 0.0, 0.8]
    store = store_from_parts([[1.0, 0.0, 0.0]], [0], [t1, t2], 1)
    scores = class_scores(store, [(0, 1)])
    assert scores[0, 0] == pytest.approx(0.4, abs=1e-6)


def test_orthogonal_scores_zero():
    store = store_from_parts([[1.0, 0.0, 0.0]], [0], [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 1)
    scores = class_scores(store, [(0, 1)])
    assert scores[0, 0] == pytest.approx(0.0, abs=1e-7)


def test_unbound_id_rejected():
    store = store_from_parts([[1.0, 0.0]], [0], [[0.0, 1.0]], 1)
    with pytest.raises(UnboundIdError):
        class_scores(store, [(5,)])


def test_predict_strict_and_tie():
    assert predict(np.array([[0.1, 0.9]]))[0] == 1
    assert predict(np.array([[0.5, 0.5]]))[0] == 0
    assert predict(np.array([[0.2, 0.7, 0.7]]))[0] == 1


def test_predict_matches_scalar_loop():
    rng = np.random.default_rng(0)
    scores = rng.standard_normal((3, 4))
    expected = []
    for row in scores:
        best = 0
        for c in range(1, len(row)):
            if row[c] > row[best]:
                best = c
        expected.append(best)
    assert list(predict(scores)) == expected


def test_scores_match_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        store, d_sets = random_instance(rng)
        fast = class_scores(store, d_sets)
        slow = brute_force_scores(store, d_sets)
        assert np.abs(fast - slow).max() <= 1e-9


def test_fitness_matches_brute_force_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        store, d_sets = random_instance(rng)
        alpha = float(rng.uniform(0, 2000))
        tau = float(rng.uniform(5, 120))
        got = fitness(store, d_sets, alpha, tau)
        acc, mean_lp, fit = brute_force_breakdown(store, d_sets, alpha, tau)
        assert got.accuracy == acc
        assert got.mean_true_logprob == pytest.approx(mean_lp, abs=1e-9)
        assert got.fitness == pytest.approx(fit, abs=1e-9)


def test_single_class_degenerate():
    store = store_from_parts([[1.0, 0.0]], [0], [[0.6, 0.8]], 1)
    for alpha in (0.0, 1.0, 1e4):
        got = fitness(store, [(0,)], alpha)
        assert got.accuracy == 1.0
        assert got.mean_true_logprob == 0.0
        assert got.fitness == 1.0


def test_alpha_zero_fitness_is_accuracy():
    rng = np.random.default_rng(3)
    store, d_sets = random_instance(rng)
    got = fitness(store, d_sets, alpha=0.0)
    assert got.fitness == got.accuracy


def test_margin_ordering_two_candidates():
    # identical predictions, true-class margins 0.3 vs 0.1, two classes,
    # tau=100: the wider margin wins for any alpha > 0
    def margin_store(margin):
        t0 = [0.4, 0.0, math.sqrt(1 - 0.16)]
        t1 = [0.4 - margin, 0.0, math.sqrt(1 - (0.4 - margin) ** 2)]
        return store_from_parts([[1.0, 0.0, 0.0]], [0], [t0, t1], 2,
                                kinds=[("description", 0, None), ("description", 1, None)])

    for alpha in (1e-3, 1.0, 1e3):
        wide = fitness(margin_store(0.3), [(0,), (1,)], alpha, tau=100.0)
        narrow = fitness(margin_store(0.1), [(0,), (1,)], alpha, tau=100.0)
        assert wide.accuracy == narrow.accuracy == 1.0
        assert wide.fitness > narrow.fitness
    # hand-computed expectation: log p = -log(1 + exp(-tau * margin))
    expected = -math.log1p(math.exp(-100 * 0.3))
    assert wide.mean_true_logprob == pytest.approx(expected, abs=1e-9)


def test_argmax_scale_invariance():
    rng = np.random.default_rng(4)
    for _ in range(20):
        scores = rng.standard_normal((5, 4))
        scale = float(rng.uniform(0.01, 50))
        assert np.array_equal(predict(scores), predict(scores * scale))


def test_mean_decomposition():
    rng = np.random.default_rng(5)
    for _ in range(10):
        store, d_sets = random_instance(rng, max_classes=3, max_texts=6)
        ids = d_sets[0]
        if len(ids) < 2:
            continue
        cut = len(ids) // 2
        a, b = ids[:cut], ids[cut:]
        whole = class_scores(store, [ids])[:, 0]
        parts = (
            len(a) * class_scores(store, [a])[:, 0]
            + len(b) * class_scores(store, [b])[:, 0]
        ) / len(ids)
        assert np.abs(whole - parts).max() <= 1e-9


def test_accuracy_bounds_and_integrality():
    rng = np.random.default_rng(6)
    for _ in range(10):
        store, d_sets = random_instance(rng)
        got = fitness(store, d_sets, alpha=1.0)
        assert 0.0 <= got.accuracy <= 1.0
        assert got.accuracy * got.n_samples == pytest.approx(
            round(got.accuracy * got.n_samples), abs=1e-9
        )


def test_mean_true_logprob_nonpositive():
    rng = np.random.default_rng(7)
    for _ in range(10):
        store, d_sets = random_instance(rng)
        got = fitness(store, d_sets, alpha=1.0)
        assert got.mean_true_logprob <= 0.0


def test_fitness_monotone_in_true_class_similarity():
    # raising one sample's true-class score (others fixed) never lowers fitness
    rng = np.random.default_rng(8)
    for _ in range(20):
        n, c = 4, 3
        scores = rng.standard_normal((n, c))
        labels = rng.integers(0, c, size=n)
        base = breakdown_from_scores(scores, labels, alpha=7.0, tau=30.0)
        bumped = scores.copy()
        i = int(rng.integers(n))
        bumped[i, labels[i]] += float(rng.uniform(0.01, 0.5))
        after = breakdown_from_scores(bumped, labels, alpha=7.0, tau=30.0)
        assert after.fitness >= base.fitness


def test_candidate_value_equality():
    a = CandidatePrompt(frozenset([1, 2]), (frozenset([3]),), generation_tag=0)
    b = CandidatePrompt(frozenset([2, 1]), (frozenset([3]),), generation_tag=99)
    assert a == b
    assert hash(a) == hash(b)
    assert a != CandidatePrompt(frozenset([1]), (frozenset([3]),))


def test_pcc_perfect_correlations():
    xs = [1.0, 2.0, 5.0, 7.0]
    assert pcc(xs, xs) == pytest.approx(1.0, abs=1e-12)
    assert pcc(xs, [-x for x in xs]) == pytest.approx(-1.0, abs=1e-12)


def test_pcc_closed_form():
    # dx=(-1,0,1), dy=(-1,-1,2): 3 / sqrt(2 * 6) = 0.866
    assert pcc([1, 2, 3], [2, 2, 5]) == pytest.approx(0.866, abs=1e-3)


def test_pcc_degenerate_variance():
    with pytest.raises(DegenerateVarianceError):
        pcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pcc([1.0], [2.0])
