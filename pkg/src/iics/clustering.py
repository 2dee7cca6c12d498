"""Agglomerative clustering to a fixed cluster count on a similarity matrix.

Clusters are identified by their lowest member id. Each step merges the
pair with the highest linkage similarity; ties go to the lexicographically
smallest (i, j). Final labels are numbered by lowest member id.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClusterAssignment, SimilarityMatrix

LINKAGES = ("average", "complete", "single")


@dataclass(frozen=True)
class ClusterConfig:
    k: int
    linkage: str = "average"

    def __post_init__(self) -> None:
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def _values(S) -> np.ndarray:
    return S.values if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)


def _validate(S: np.ndarray, k: int) -> None:
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("similarity matrix must be square")
    if k > S.shape[0]:
        raise ValueError(f"k={k} exceeds number of samples {S.shape[0]}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if np.any(np.abs(S - S.T) > 1e-9):
        raise ValueError("similarity matrix is not symmetric")


def _relabel(owner: np.ndarray, k: int) -> ClusterAssignment:
    # owner[i] = representative (lowest member id) of i's cluster
    reps = np.unique(owner)
    labels = np.searchsorted(reps, owner)
    return ClusterAssignment(labels, k)


def agglomerate(S, cfg: ClusterConfig) -> ClusterAssignment:
    """Merge loop with a cached best partner per row.

    ``M`` holds current inter-cluster linkage values; row r caches its best
    partner among active clusters c > r. Average linkage keeps the raw
    similarity sums in ``T`` and divides by the size product, so averages
    that tie exactly in the direct definition also tie here.
    """
    S = _values(S)
    _validate(S, cfg.k)
    n = S.shape[0]
    owner = np.arange(n)
    if cfg.k == n:
        return _relabel(owner, cfg.k)

    M = S.astype(np.float64, copy=True)
    T = M.copy() if cfg.linkage == "average" else None
    np.fill_diagonal(M, -np.inf)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    best = np.full(n, -1)
    best_val = np.full(n, -np.inf)

    def refresh(r: int) -> None:
        if r >= n - 1:
            best[r], best_val[r] = -1, -np.inf
            return
        row = M[r, r + 1:]
        j = int(np.argmax(row))
        best[r], best_val[r] = r + 1 + j, row[j]

    for r in range(n):
        refresh(r)

    members = {i: [i] for i in range(n)}
    clusters = n
    while clusters > cfg.k:
        cand = np.where(active, best_val, -np.inf)
        i = int(np.argmax(cand))
        j = int(best[i])
        ni, nj = size[i], size[j]
        if T is not None:
            T[i] += T[j]
            T[:, i] = T[i]
            new = np.where(active, T[i] / ((ni + nj) * size), -np.inf)
        elif cfg.linkage == "complete":
            new = np.minimum(M[i], M[j])
        else:
            new = np.maximum(M[i], M[j])
        M[i] = new
        M[:, i] = new
        M[i, i] = -np.inf
        M[j, :] = -np.inf
        M[:, j] = -np.inf
        active[j] = False
        best_val[j] = -np.inf
        size[i] = ni + nj
        members[i].extend(members.pop(j))
        clusters -= 1

        stale = np.flatnonzero(active & ((best == i) | (best == j)))
        for r in stale:
            refresh(int(r))
        refresh(i)
        # rows below i may now prefer the merged cluster
        lower = np.flatnonzero(active[:i])
        if lower.size:
            vals = M[lower, i]
            better = (vals > best_val[lower]) | ((vals == best_val[lower]) & (i < best[lower]))
            best[lower[better]] = i
            best_val[lower[better]] = vals[better]

    for rep, ids in members.items():
        owner[ids] = rep
    return _relabel(owner, cfg.k)


def agglomerate_reference(S, cfg: ClusterConfig) -> ClusterAssignment:
    """Exhaustive reference: every step recomputes the linkage of every
    cluster pair directly from member similarities."""
    S = _values(S)
    _validate(S, cfg.k)
    clusters = [[i] for i in range(S.shape[0])]
    while len(clusters) > cfg.k:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                block = S[np.ix_(clusters[a], clusters[b])]
                if cfg.linkage == "average":
                    v = block.sum() / block.size
                elif cfg.linkage == "complete":
                    v = block.min()
                else:
                    v = block.max()
                key = (v, -clusters[a][0], -clusters[b][0])
                if best is None or key > best[0]:
                    best = (key, a, b)
        _, a, b = best
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
        clusters.sort(key=lambda c: c[0])
    owner = np.empty(S.shape[0], dtype=np.int64)
    for c in clusters:
        owner[c] = c[0]
    return _relabel(owner, cfg.k)


def cluster_quality(assign: ClusterAssignment | np.ndarray, truth) -> tuple[float, float]:
    """(NMI with arithmetic-mean normalization, purity)."""
    from sklearn.metrics import normalized_mutual_info_score

    labels = assign.labels if isinstance(assign, ClusterAssignment) else np.asarray(assign)
    truth = np.asarray(truth)
    if labels.shape != truth.shape:
        raise ValueError("assignment and truth lengths differ")
    nmi = float(normalized_mutual_info_score(truth, labels))
    _, lab_idx = np.unique(labels, return_inverse=True)
    _, tru_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((lab_idx.max() + 1, tru_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (lab_idx, tru_idx), 1)
    purity = float(table.max(axis=1).sum() / labels.size)
    return nmi, purity
