import time

import numpy as np
import pytest

from conftest import PUBLISHED_EQUILIBRIUM
from nestedshape.analysis.markov import (
    EquilibriumDistribution,
    StateSequence,
    TransitionMatrix,
    equilibrium,
    estimate_transition_matrix,
    final_location_probabilities,
    format_equilibrium_table,
    format_transition_table,
    hellinger_distance,
    hellinger_distance_matrix,
    pool_transition_matrix,
    temporal_cluster,
)
from nestedshape.errors import (
    DimensionError,
    NoUniqueEquilibriumError,
    RangeError,
    UnderdeterminedError,
    ValidationError,
)


def seq(labels, K=2, run_id="r"):
    return StateSequence(run_id, labels, K)


def random_stochastic(rng, K):
    m = rng.random((K, K)) ** 3
    return m / m.sum(axis=1, keepdims=True)


def test_counting_examples():
    assert np.array_equal(estimate_transition_matrix(seq([1, 1, 2, 2, 1])).probs, [[0.5, 0.5], [0.5, 0.5]])
    assert np.array_equal(estimate_transition_matrix(seq([1, 1, 1])).probs, [[1.0, 0.0], [0.0, 1.0]])
    t = estimate_transition_matrix(seq([1, 2, 3, 1], K=3))
    assert np.array_equal(t.probs, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert np.array_equal(t.counts, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])


def test_unvisited_rows_are_flagged():
    t = estimate_transition_matrix(seq([1, 1, 1]))
    assert list(t.row_support) == [True, False]


def test_sequence_validation():
    with pytest.raises(RangeError):
        seq([0, 1])
    with pytest.raises(RangeError):
        seq([1, 3])
    with pytest.raises(UnderdeterminedError):
        seq([1])


def test_transition_matrix_validation():
    with pytest.raises(ValidationError):
        TransitionMatrix(
            probs=np.array([[0.5, 0.6], [0.0, 1.0]]), counts=np.zeros((2, 2)), row_support=np.ones(2, bool)
        )
    with pytest.raises(DimensionError):
        TransitionMatrix(probs=np.ones((2, 3)) / 3, counts=np.zeros((2, 3)), row_support=np.ones(2, bool))


def test_pooling_one_run_is_its_estimate():
    s = seq([1, 2, 2, 1, 1, 2], run_id="a")
    assert np.array_equal(pool_transition_matrix([s]).probs, estimate_transition_matrix(s).probs)


def test_pooling_disjoint_rows():
    a = seq([1, 1, 2], K=3, run_id="a")
    b = seq([3, 3, 2], K=3, run_id="b")
    pooled = pool_transition_matrix([a, b])
    assert np.array_equal(pooled.probs[0], [0.5, 0.5, 0.0])
    assert np.array_equal(pooled.probs[2], [0.0, 0.5, 0.5])
    assert np.array_equal(pooled.probs[1], [0.0, 1.0, 0.0])
    assert not pooled.row_support[1]


def test_pooled_and_averaged_modes():
    a = seq([1, 1, 1, 1, 2], run_id="a")
    b = seq([1, 2, 2], run_id="b")
    pooled = pool_transition_matrix([a, b], "pooled")
    averaged = pool_transition_matrix([a, b], "averaged")
    assert np.allclose(pooled.probs, [[0.6, 0.4], [0.0, 1.0]])
    assert np.allclose(averaged.probs, [[0.375, 0.625], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        pool_transition_matrix([a, b], "median")


def test_pooling_ignores_run_order(rng):
    seqs = [seq(rng.integers(1, 5, 40), K=4, run_id=str(i)) for i in range(6)]
    forward = pool_transition_matrix(seqs)
    backward = pool_transition_matrix(seqs[::-1])
    assert np.array_equal(forward.probs, backward.probs)
    assert np.array_equal(equilibrium(forward).probs, equilibrium(backward).probs)


def test_published_transition_rows(published_transitions):
    assert np.all(np.abs(published_transitions.sum(axis=1) - 1.0) <= 5e-4)


def test_published_equilibrium(published_transitions):
    result = equilibrium(TransitionMatrix.from_probs(published_transitions))
    assert np.allclose(result.probs, PUBLISHED_EQUILIBRIUM, atol=0.005)
    assert result.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_equilibrium_is_stationary(rng):
    for _ in range(20):
        p = random_stochastic(rng, 5)
        pi = equilibrium(p).probs
        assert np.allclose(pi @ p, pi, atol=1e-10)
        values, vectors = np.linalg.eig(p.T)
        v = np.real(vectors[:, np.argmin(np.abs(values - 1))])
        assert np.allclose(pi, v / v.sum(), atol=1e-8)


def test_equilibrium_examples():
    assert np.allclose(equilibrium(np.full((2, 2), 0.5)).probs, [0.5, 0.5])
    with pytest.raises(NoUniqueEquilibriumError):
        equilibrium(np.eye(2))


@pytest.mark.parametrize(
    "p",
    [
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]],
        [[0.2, 0.8, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]],
    ],
)
def test_periodic_chain_is_rejected_at_once(p):
    start = time.perf_counter()
    with pytest.raises(NoUniqueEquilibriumError, match="period 2"):
        equilibrium(np.array(p))
    assert time.perf_counter() - start < 0.1


def test_published_equilibrium_runtime(published_transitions):
    p = TransitionMatrix.from_probs(published_transitions)
    equilibrium(p)
    timings = []
    for _ in range(50):
        start = time.perf_counter()
        equilibrium(p)
        timings.append(time.perf_counter() - start)
    assert min(timings) < 1e-3


def test_transient_state_gets_no_mass():
    p = np.array([[0.5, 0.5, 0.0], [0.0, 0.3, 0.7], [0.0, 0.6, 0.4]])
    pi = equilibrium(p).probs
    assert pi[0] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(pi @ p, pi, atol=1e-10)


def test_hellinger_examples():
    eye = np.eye(2)
    assert hellinger_distance(eye, eye) == 0.0
    assert hellinger_distance(eye, eye[::-1]) == pytest.approx(np.sqrt(2.0), abs=1e-12)
    with pytest.raises(DimensionError):
        hellinger_distance(np.eye(2), np.eye(3))


def test_hellinger_is_a_metric(rng):
    for _ in range(1000):
        a, b, c = (random_stochastic(rng, 4) for _ in range(3))
        ab, bc, ac = hellinger_distance(a, b), hellinger_distance(b, c), hellinger_distance(a, c)
        assert ab == hellinger_distance(b, a)
        assert ac <= ab + bc + 1e-12
        assert ab <= np.sqrt(4.0) + 1e-12


def test_hellinger_matrix(rng):
    mats = [random_stochastic(rng, 3) for _ in range(6)]
    d = hellinger_distance_matrix(mats)
    for i in range(6):
        for j in range(6):
            assert d.values[i, j] == pytest.approx(hellinger_distance(mats[i], mats[j]), abs=1e-14)


def test_temporal_clusters_group_matching_runs(rng):
    a, b = random_stochastic(rng, 3), random_stochastic(rng, 3)
    mats = [TransitionMatrix.from_probs(x) for x in (a, a, b, b)]
    tc = temporal_cluster(mats, 2, mode="averaged")
    assert list(tc.labels) == [1, 1, 2, 2]
    assert np.allclose(tc.pooled[0].probs, a)
    assert all(isinstance(e, EquilibriumDistribution) for e in tc.equilibria)


def test_temporal_cluster_without_equilibrium(caplog):
    mats = [TransitionMatrix.from_probs(np.eye(2)), TransitionMatrix.from_probs(np.full((2, 2), 0.5))]
    tc = temporal_cluster(mats, 2, mode="averaged")
    assert tc.equilibria[0] is None
    assert "no unique equilibrium" in caplog.text
    with pytest.raises(RangeError):
        temporal_cluster(mats, 3)


def test_final_location_probabilities():
    seqs = [
        seq([1, 3], K=4, run_id="a"),
        seq([2, 3], K=4, run_id="b"),
        seq([1, 1], K=4, run_id="c"),
        seq([4, 2], K=4, run_id="d"),
    ]
    table = final_location_probabilities(seqs, [1, 1, 2, 2])
    assert np.allclose(table, [[0, 0, 1, 0], [0.5, 0.5, 0, 0]])
    assert np.allclose(final_location_probabilities(seqs[:2], [1, 2]), [[0, 0, 1, 0], [0, 0, 1, 0]])
    with pytest.raises(DimensionError):
        final_location_probabilities(seqs, [1, 2])


def test_table_formatting(published_transitions):
    text = format_transition_table(TransitionMatrix.from_probs(published_transitions))
    assert "Cluster 4" in text and "0.8628" in text
    overall = equilibrium(TransitionMatrix.from_probs(published_transitions))
    text = format_equilibrium_table({"Overall": overall, "TC1": None})
    assert "Overall" in text and "TC1" in text
    assert "-" in text.splitlines()[-1]
