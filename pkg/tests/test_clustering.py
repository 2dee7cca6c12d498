import numpy as np
import pytest

from iics.clustering import (
    LINKAGES,
    ClusterConfig,
    agglomerate,
    agglomerate_reference,
    cluster_quality,
)
from iics.core import cosine_matrix
from oracles import agglomerate_brute, partitions_equal


def random_sim(rng, n, ties=False):
    if ties:
        # coarse grid values create many exact ties
        A = rng.integers(0, 4, size=(n, n)) / 4.0
    else:
        A = rng.uniform(-1, 1, size=(n, n))
    S = np.triu(A, 1)
    S = S + S.T
    np.fill_diagonal(S, 1.0)
    return S


@pytest.mark.parametrize("linkage", LINKAGES)
def test_matches_brute_force_reference(linkage):
    rng = np.random.default_rng(hash(linkage) % 2**32)
    for trial in range(100):
        n = int(rng.integers(2, 31))
        k = int(rng.integers(1, n + 1))
        S = random_sim(rng, n, ties=trial % 3 == 0)
        got = agglomerate(S, ClusterConfig(k, linkage)).labels
        np.testing.assert_array_equal(got, agglomerate_brute(S, k, linkage))
        np.testing.assert_array_equal(got, agglomerate_reference(S, ClusterConfig(k, linkage)).labels)


def test_k_equals_n_and_one():
    S = random_sim(np.random.default_rng(0), 7)
    np.testing.assert_array_equal(agglomerate(S, ClusterConfig(7)).labels, np.arange(7))
    np.testing.assert_array_equal(agglomerate(S, ClusterConfig(1)).labels, np.zeros(7))


def test_two_blobs():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal([5, 0], 0.1, size=(4, 2)), rng.normal([0, 5], 0.1, size=(4, 2))])
    perm = rng.permutation(8)
    x = x[perm]
    blob = (perm >= 4).astype(int)
    for linkage in LINKAGES:
        a = agglomerate(cosine_matrix(x), ClusterConfig(2, linkage))
        assert partitions_equal(a.labels, blob)
        assert a.labels[0] == 0


def test_exact_cluster_count_and_label_order():
    rng = np.random.default_rng(2)
    for _ in range(20):
        S = random_sim(rng, 25)
        a = agglomerate(S, ClusterConfig(6))
        assert sorted(set(a.labels.tolist())) == list(range(6))
        firsts = [int(np.flatnonzero(a.labels == c)[0]) for c in range(6)]
        assert firsts == sorted(firsts)


def test_permutation_equivariance():
    rng = np.random.default_rng(3)
    for linkage in LINKAGES:
        S = random_sim(rng, 20)
        perm = rng.permutation(20)
        a = agglomerate(S, ClusterConfig(5, linkage)).labels
        b = agglomerate(S[np.ix_(perm, perm)], ClusterConfig(5, linkage)).labels
        assert partitions_equal(a[perm], b)


@pytest.mark.parametrize("linkage", ["single", "complete"])
def test_monotone_transform_invariance(linkage):
    rng = np.random.default_rng(4)
    for _ in range(20):
        S = random_sim(rng, 18)
        a = agglomerate(S, ClusterConfig(4, linkage)).labels
        b = agglomerate(np.exp(3 * S) - 7, ClusterConfig(4, linkage)).labels
        np.testing.assert_array_equal(a, b)


def test_errors():
    S = random_sim(np.random.default_rng(5), 4)
    with pytest.raises(ValueError, match="exceeds"):
        agglomerate(S, ClusterConfig(5))
    bad = S.copy()
    bad[0, 1] += 1e-6
    with pytest.raises(ValueError, match="symmetric"):
        agglomerate(bad, ClusterConfig(2))
    with pytest.raises(ValueError):
        ClusterConfig(2, "ward")


def test_cluster_quality():
    assert cluster_quality(np.array([2, 2, 0, 1]), [5, 5, 6, 7]) == (1.0, 1.0)
    nmi, purity = cluster_quality(np.zeros(4, dtype=int), [0, 0, 1, 1])
    assert nmi == 0.0 and purity == 0.5
    nmi, purity = cluster_quality(np.array([0, 0, 1, 1]), [0, 1, 0, 1])
    assert abs(nmi) < 1e-12 and purity == 0.5
    with pytest.raises(ValueError):
        cluster_quality(np.zeros(3, dtype=int), [0, 1])


def test_average_linkage_exact_ties():
    # dyadic grid values: tied averages must be recognized as exact ties
    rng = np.random.default_rng(98)
    for _ in range(150):
        n = int(rng.integers(5, 28))
        k = int(rng.integers(1, n))
        S = random_sim(rng, n, ties=True)
        np.testing.assert_array_equal(agglomerate(S, ClusterConfig(k, "average")).labels,
                                      agglomerate_brute(S, k, "average"))
