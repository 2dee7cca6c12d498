import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iics.core import (
    ClusterAssignment,
    Dataset,
    SimilarityMatrix,
    cosine_matrix,
    l2_normalize,
    make_rng,
    spawn_rngs,
)


def test_l2_normalize_examples():
    np.testing.assert_allclose(l2_normalize([3, 4]), [0.6, 0.8], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(l2_normalize([0, 0]), [0, 0])
    np.testing.assert_array_equal(l2_normalize([1e-300, 0]), [1e-300, 0])


def test_l2_normalize_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite vector"):
        l2_normalize([1.0, np.nan])


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-1e6, 1e6)))
def test_l2_normalize_norm_is_one_or_zero(v):
    n = np.linalg.norm(l2_normalize(v))
    assert abs(n - 1) <= 1e-6 or np.linalg.norm(v) <= 1e-12


def test_cosine_examples():
    S = cosine_matrix(np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert S.kind == "cosine"
    assert S.values[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert cosine_matrix(np.eye(2)).values[0, 1] == 0.0


def test_cosine_matches_scalar_loop():
    E = make_rng(7).normal(size=(5, 3))
    S = cosine_matrix(E).values
    for i in range(5):
        for j in range(5):
            dot = sum(E[i, k] * E[j, k] for k in range(3))
            ni = sum(x * x for x in E[i]) ** 0.5
            nj = sum(x * x for x in E[j]) ** 0.5
            assert abs(S[i, j] - dot / (ni * nj)) <= 1e-12


def test_cosine_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        cosine_matrix([np.ones(2), np.ones(3)])


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 6)),
              elements=st.floats(-100, 100)))
def test_cosine_symmetric_bounded_unit_diagonal(E):
    S = cosine_matrix(E)
    assert S.is_symmetric(0.0)
    assert np.all(np.abs(S.values) <= 1.0)
    nonzero = np.linalg.norm(E, axis=1) > 1e-12
    np.testing.assert_array_equal(np.diag(S.values)[nonzero], 1.0)
    # the diagonal is the row maximum
    assert np.all(S.values.max(axis=1)[nonzero] <= np.diag(S.values)[nonzero])


def test_rng_streams_reproducible():
    a = make_rng(123).random(10_000)
    b = make_rng(123).random(10_000)
    np.testing.assert_array_equal(a, b)
    x, y = spawn_rngs(5, 2)
    assert not np.array_equal(x.random(4), y.random(4))
    np.testing.assert_array_equal(spawn_rngs(5, 2)[1].random(4), spawn_rngs(5, 2)[1].random(4))


def _ds(**kw):
    base = dict(signals=np.zeros((4, 1, 2)), cameras=[0, 1, 0, 1], num_cameras=2)
    base.update(kw)
    return Dataset(**base)


def test_dataset_validation():
    ds = _ds(identities=[0, 0, 1, 1])
    assert len(ds) == 4 and ds.camera_counts().tolist() == [2, 2]
    assert ds.sample(2).camera == 0 and ds.sample(2).true_identity == 1
    with pytest.raises(ValueError, match="empty camera"):
        _ds(cameras=[0, 0, 0, 0])
    with pytest.raises(ValueError, match="non-finite"):
        _ds(signals=np.full((4, 1, 2), np.inf))
    with pytest.raises(ValueError, match="num_cameras"):
        _ds(cameras=[0, 0, 0, 0], num_cameras=1)
    with pytest.raises(ValueError):
        _ds(identities=[0, 1])


def test_dataset_min_per_camera():
    ds = _ds()
    ds.check_min_per_camera(1)
    with pytest.raises(ValueError, match="camera"):
        ds.check_min_per_camera(2)


def test_cluster_assignment_invariants():
    a = ClusterAssignment([0, 1, 1, 2], 3)
    assert a.sizes().tolist() == [1, 2, 1]
    with pytest.raises(ValueError, match="non-empty"):
        ClusterAssignment([0, 0, 2], 3)
    with pytest.raises(ValueError, match="range"):
        ClusterAssignment([0, 3], 2)


def test_similarity_matrix_kind_checked():
    with pytest.raises(ValueError, match="kind"):
        SimilarityMatrix(np.eye(2), "euclid")
    with pytest.raises(ValueError, match="square"):
        SimilarityMatrix(np.ones((2, 3)), "cosine")
