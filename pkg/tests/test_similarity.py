import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iics.core import SimilarityMatrix, cosine_matrix
from iics.similarity import (
    InterSimConfig,
    ScoreVector,
    inter_camera_similarity,
    jaccard_delta,
    jaccard_matrix,
    k_reciprocal_distance,
    k_reciprocal_rerank,
)
from oracles import k_reciprocal_reference

LAYOUT = ((0, 3), (1, 2), (2, 4))


def random_scores(rng, n, layout=LAYOUT):
    blocks = [rng.dirichlet(np.ones(m), size=n) for _, m in layout]
    return ScoreVector(np.concatenate(blocks, axis=1), layout)


def one_hot(idx, layout=LAYOUT):
    parts = []
    for (_, m), i in zip(layout, idx):
        b = np.zeros(m)
        b[i] = 1.0
        parts.append(b)
    return ScoreVector(np.concatenate(parts), layout)


# Jaccard

def test_jaccard_hand_case():
    a = ScoreVector(np.array([0.6, 0.4]), ((0, 2),))
    b = ScoreVector(np.array([0.2, 0.8]), ((0, 2),))
    assert abs(jaccard_delta(a, b) - 3 / 7) <= 1e-12


def test_jaccard_self_similarity():
    rng = np.random.default_rng(0)
    for s in random_scores(rng, 20).rows():
        assert abs(jaccard_delta(s, s) - 1.0) <= 1e-12


def test_jaccard_disjoint_support():
    assert jaccard_delta(one_hot([0, 0, 0]), one_hot([1, 1, 1])) == 0.0
    assert jaccard_delta(one_hot([2, 1, 3]), one_hot([0, 0, 0])) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jaccard_symmetry_and_bounds(seed):
    rng = np.random.default_rng(seed)
    a, b = random_scores(rng, 2).rows()
    d_ab, d_ba = jaccard_delta(a, b), jaccard_delta(b, a)
    assert abs(d_ab - d_ba) <= 1e-12
    assert -1e-12 <= d_ab <= 1.0 + 1e-12


def test_jaccard_layout_mismatch():
    a = ScoreVector(np.array([0.5, 0.5, 1.0]), ((0, 2), (1, 1)))
    b = ScoreVector(np.array([1.0, 0.5, 0.5]), ((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        jaccard_delta(a, b)
    with pytest.raises(ValueError):
        jaccard_matrix([a, b])


def test_jaccard_matrix_matches_pairwise():
    rng = np.random.default_rng(1)
    S = random_scores(rng, 9)
    J = jaccard_matrix(S, chunk=4)
    rows = S.rows()
    for i in range(9):
        for j in range(9):
            expected = 1.0 if i == j else jaccard_delta(rows[i], rows[j])
            assert abs(J[i, j] - expected) <= 1e-12
    np.testing.assert_array_equal(J, J.T)
    assert J.min() >= 0 and J.max() <= 1


def test_jaccard_matrix_trivial_cases():
    s = random_scores(np.random.default_rng(2), 1)
    np.testing.assert_array_equal(jaccard_matrix(s), [[1.0]])
    same = ScoreVector(np.tile(s.values, (4, 1)), LAYOUT)
    np.testing.assert_allclose(jaccard_matrix(same), np.ones((4, 4)), atol=1e-12)


def test_score_vector_width_checked():
    with pytest.raises(ValueError):
        ScoreVector(np.ones(3), ((0, 2),))


# inter-camera similarity

def test_inter_similarity_mu_zero_is_base():
    base = cosine_matrix(np.random.default_rng(0).normal(size=(4, 3)))
    S = inter_camera_similarity(base, np.random.default_rng(1).uniform(size=(4, 4)), 0.0)
    np.testing.assert_array_equal(S.values, base.values)
    assert S.kind == "inter"


def test_inter_similarity_elementwise():
    base = cosine_matrix(np.random.default_rng(0).normal(size=(3, 5)))
    delta = jaccard_matrix(random_scores(np.random.default_rng(1), 3))
    S = inter_camera_similarity(base, delta, 0.02)
    np.testing.assert_allclose(S.values, base.values + 0.02 * delta, atol=1e-15)
    np.testing.assert_allclose(S.values, S.values.T, atol=1e-15)


def test_inter_similarity_cross_camera_only():
    base = SimilarityMatrix(np.zeros((3, 3)), "cosine")
    S = inter_camera_similarity(base, np.ones((3, 3)), 0.5, cameras=np.array([0, 0, 1]))
    np.testing.assert_array_equal(S.values, [[0, 0, 0.5], [0, 0, 0.5], [0.5, 0.5, 0]])


def test_inter_similarity_errors():
    base = SimilarityMatrix(np.eye(3), "cosine")
    with pytest.raises(ValueError, match="shape"):
        inter_camera_similarity(base, np.ones((2, 2)), 0.1)
    with pytest.raises(ValueError):
        inter_camera_similarity(SimilarityMatrix(np.eye(3), "inter"), np.ones((3, 3)), 0.1)
    with pytest.raises(ValueError):
        InterSimConfig(mu=float("nan"))


# k-reciprocal re-ranking

def test_rerank_matches_reference():
    for seed in range(5):
        x = np.random.default_rng(seed).normal(size=(12, 6))
        # the reference returns the row-normalized distance before symmetrization
        np.testing.assert_allclose(k_reciprocal_distance(x, 5, 2, 0.3),
                                   k_reciprocal_reference(x, 5, 2, 0.3), atol=1e-9)


def test_rerank_separated_clusters():
    rng = np.random.default_rng(3)
    centers = np.array([[10.0, 0, 0], [0, 10.0, 0]])
    x = np.concatenate([c + 0.1 * rng.normal(size=(8, 3)) for c in centers])
    S = k_reciprocal_rerank(x, k1=4, k2=2).values
    lab = np.repeat([0, 1], 8)
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(16, dtype=bool)
    assert S[same & off].min() > S[~same].max()
    np.testing.assert_allclose(S, S.T, atol=0)


def test_rerank_lambda_one_keeps_cosine_order():
    x = np.random.default_rng(4).normal(size=(15, 5))
    S = k_reciprocal_rerank(x, 5, 2, lambda_rr=1.0).values
    C = cosine_matrix(x).values
    D = k_reciprocal_distance(x, 5, 2, lambda_rr=1.0)
    for i in range(15):
        np.testing.assert_array_equal(np.argsort(D[i], kind="stable"),
                                      np.argsort(-C[i], kind="stable"))
    assert S.shape == (15, 15)


def test_rerank_parameter_bounds():
    x = np.random.default_rng(0).normal(size=(6, 3))
    with pytest.raises(ValueError):
        k_reciprocal_rerank(x, 6, 2)
    with pytest.raises(ValueError):
        k_reciprocal_rerank(x, 4, 4)
    with pytest.raises(ValueError):
        k_reciprocal_rerank(x, 4, 2, lambda_rr=1.5)
