import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import brute_dominates, brute_front
from pareto_choice.choice_core import (
    ChoiceTask,
    Dataset,
    InvalidArgument,
    as_mask,
    dominance_matrix,
    dominates,
    pareto_front,
    pareto_front_batch,
    predict_choice,
)
from pareto_choice.embed_net import init_params


def test_dominates_examples():
    assert dominates((1, 1), (0, 0))
    assert not dominates((1, 1), (1, 1))
    assert not dominates((1, 0), (0, 1))
    assert dominates((1, 0), (0, 0))


def test_dominates_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        dominates((1, 2), (1, 2, 3))


def test_front_examples():
    np.testing.assert_array_equal(pareto_front([[3, 7]]), [1])
    np.testing.assert_array_equal(pareto_front([[1, 1], [0, 2], [0, 0], [2, 0]]), [1, 1, 0, 1])


def test_front_duplicates_both_kept():
    np.testing.assert_array_equal(pareto_front([[1, 1], [1, 1], [0, 0]]), [1, 1, 0])


def test_front_errors():
    with pytest.raises(InvalidArgument):
        pareto_front(np.zeros((0, 2)))
    with pytest.raises(InvalidArgument):
        pareto_front([[np.nan, 1.0]])


def test_dominance_matrix_orientation():
    D = dominance_matrix(np.array([[2.0, 2.0], [1.0, 1.0]]))
    # D[j, i]: j dominates i
    assert D[0, 1] and not D[1, 0]


def test_front_matches_oracle_with_duplicates():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        m = int(rng.integers(1, 21))
        dp = int(rng.integers(1, 5))
        Z = rng.integers(0, 4, size=(m, dp)).astype(float)
        assert pareto_front(Z).tolist() == brute_front(Z)


def test_batch_front_matches_single():
    rng = np.random.default_rng(1)
    Z = rng.integers(0, 3, size=(50, 8, 2)).astype(float)
    B = pareto_front_batch(Z)
    for b in range(50):
        np.testing.assert_array_equal(B[b], pareto_front(Z[b]))


def test_mask_validation():
    np.testing.assert_array_equal(as_mask([1, 0, True]), [1, 0, 1])
    with pytest.raises(InvalidArgument):
        as_mask([0, 2])
    with pytest.raises(InvalidArgument):
        as_mask([0, 1], m=3)


def test_task_and_dataset_validation():
    with pytest.raises(InvalidArgument):
        ChoiceTask(np.zeros((0, 2)))
    with pytest.raises(InvalidArgument):
        ChoiceTask(np.array([[np.inf, 0.0]]))
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((2, 3, 2)), np.zeros((2, 4), dtype=np.int8))
    ds = Dataset(np.zeros((2, 3, 2)), np.array([[1, 0, 0], [1, 1, 1]], dtype=np.int8))
    assert len(ds) == 2 and ds.m == 3 and ds.d == 2
    assert ds.positive_rate() == pytest.approx(4 / 6)
    pairs = list(ds)
    assert pairs[1][0].m == 3 and pairs[1][1].tolist() == [1, 1, 1]
    assert len(ds.subset([1])) == 1


def test_predict_choice_identity_head():
    from pareto_choice.embed_net import NetworkParams

    params = NetworkParams([], np.eye(2), np.zeros(2))
    task = ChoiceTask(np.array([[1.0, 1.0], [0.0, 2.0], [0.0, 0.0], [2.0, 0.0]]))
    np.testing.assert_array_equal(predict_choice(task, params), [1, 1, 0, 1])
    p = init_params(2, 1, 4, 2, seed=0)
    assert predict_choice(task, p).shape == (4,)


points = st.tuples(st.integers(1, 4)).flatmap(
    lambda t: hnp.arrays(np.float64, (3, t[0]), elements=st.integers(-3, 3).map(float))
)


@settings(max_examples=300, deadline=None)
@given(points)
def test_dominance_irreflexive_antisymmetric_transitive(P):
    a, b, c = P
    assert not dominates(a, a)
    assert not (dominates(a, b) and dominates(b, a))
    if dominates(a, b) and dominates(b, c):
        assert dominates(a, c)
    assert dominates(a, b) == brute_dominates(a.tolist(), b.tolist())


fronts = st.tuples(st.integers(1, 12), st.integers(1, 4)).flatmap(
    lambda t: hnp.arrays(np.float64, t, elements=st.floats(-100, 100, width=32))
)


@settings(max_examples=300, deadline=None)
@given(fronts, st.randoms(use_true_random=False))
def test_front_permutation_equivariant(Z, rnd):
    perm = list(range(len(Z)))
    rnd.shuffle(perm)
    np.testing.assert_array_equal(pareto_front(Z[perm]), pareto_front(Z)[perm])


@settings(max_examples=300, deadline=None)
@given(fronts)
def test_front_invariant_under_monotone_transform(Z):
    # transforms chosen to be exact or strictly monotone at this input range
    np.testing.assert_array_equal(pareto_front(np.tanh(Z / 200.0)), pareto_front(Z))
    np.testing.assert_array_equal(pareto_front(Z * 2.0), pareto_front(Z))


@settings(max_examples=300, deadline=None)
@given(fronts)
def test_front_nonempty_and_stable_under_dominated_addition(Z):
    f = pareto_front(Z)
    assert f.sum() >= 1
    worse = Z.min(axis=0) - 1.0
    g = pareto_front(np.vstack([Z, worse]))
    assert g[-1] == 0
    np.testing.assert_array_equal(g[:-1], f)
