"""Score-vector Jaccard similarity, inter-camera similarity and
k-reciprocal re-ranking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    KIND_COSINE,
    KIND_INTER,
    KIND_RERANKED,
    SimilarityMatrix,
    l2_normalize_rows,
)


@dataclass(frozen=True)
class ScoreVector:
    """Concatenated per-camera class probabilities.

    ``values`` is [sum M_c] for one sample or [n, sum M_c] for a batch;
    ``layout`` lists (camera, M_c) blocks in order.
    """

    values: np.ndarray
    layout: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        width = sum(m for _, m in self.layout)
        if np.shape(self.values)[-1] != width:
            raise ValueError("score vector width does not match its layout")

    def block_sums(self) -> np.ndarray:
        edges = np.cumsum([0] + [m for _, m in self.layout])
        return np.stack(
            [self.values[..., a:b].sum(axis=-1) for a, b in zip(edges[:-1], edges[1:])],
            axis=-1,
        )

    def rows(self) -> list["ScoreVector"]:
        return [ScoreVector(v, self.layout) for v in np.atleast_2d(self.values)]


@dataclass(frozen=True)
class InterSimConfig:
    mu: float = 0.02
    base_kind: str = KIND_COSINE
    k1: int = 20
    k2: int = 6
    lambda_rr: float = 0.3
    cross_camera_only: bool = False

    def __post_init__(self) -> None:
        if not np.isfinite(self.mu) or self.mu < 0:
            raise ValueError("mu must be finite and >= 0")
        if self.base_kind not in (KIND_COSINE, KIND_RERANKED):
            raise ValueError("base_kind must be 'cosine' or 'reranked'")


def jaccard_delta(s_m: ScoreVector, s_n: ScoreVector) -> float:
    if s_m.layout != s_n.layout:
        raise ValueError("score vector layouts differ")
    a = np.asarray(s_m.values, dtype=np.float64)
    b = np.asarray(s_n.values, dtype=np.float64)
    inter = np.minimum(a, b).sum()
    union = np.maximum(a, b).sum()
    if union == 0:
        return 1.0
    return float(inter / union)


def _score_array(scores) -> np.ndarray:
    if isinstance(scores, ScoreVector):
        return np.atleast_2d(np.asarray(scores.values, dtype=np.float64))
    if isinstance(scores, np.ndarray):
        return np.atleast_2d(scores.astype(np.float64))
    layouts = {s.layout for s in scores}
    if len(layouts) > 1:
        raise ValueError("score vector layouts differ")
    return np.stack([np.asarray(s.values, dtype=np.float64) for s in scores])


def jaccard_matrix(scores: Sequence[ScoreVector] | ScoreVector | np.ndarray,
                   chunk: int = 64) -> np.ndarray:
    """Pairwise min-sum / max-sum over all rows; symmetric with unit diagonal."""
    S = _score_array(scores)
    n = S.shape[0]
    totals = S.sum(axis=1)
    out = np.empty((n, n))
    for i0 in range(0, n, chunk):
        block = S[i0:i0 + chunk]
        inter = np.minimum(block[:, None, :], S[None, :, :]).sum(axis=-1)
        # max(a, b) = a + b - min(a, b) elementwise
        union = totals[i0:i0 + chunk, None] + totals[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            out[i0:i0 + chunk] = np.where(union > 0, inter / union, 1.0)
    upper = np.triu(out)
    out = upper + np.triu(out, 1).T
    np.fill_diagonal(out, 1.0)
    return out


def inter_camera_similarity(
    base: SimilarityMatrix,
    delta: np.ndarray,
    mu: float,
    cameras: np.ndarray | None = None,
) -> SimilarityMatrix:
    """base + mu * delta. With ``cameras`` given, only cross-camera pairs
    receive the delta term."""
    if base.kind not in (KIND_COSINE, KIND_RERANKED):
        raise ValueError("base similarity must be cosine or reranked")
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != base.values.shape:
        raise ValueError(f"shape mismatch: base {base.values.shape} vs delta {delta.shape}")
    if mu == 0:
        return SimilarityMatrix(base.values.copy(), KIND_INTER)
    term = mu * delta
    if cameras is not None:
        cameras = np.asarray(cameras)
        term = np.where(cameras[:, None] != cameras[None, :], term, 0.0)
    return SimilarityMatrix(base.values + term, KIND_INTER)


def _k_reciprocal(initial_rank: np.ndarray, i: int, k: int) -> np.ndarray:
    forward = initial_rank[i, :k + 1]
    backward = initial_rank[forward, :k + 1]
    return forward[np.any(backward == i, axis=1)]


def effective_rerank_params(n: int, k1: int, k2: int) -> tuple[int, int]:
    k1 = min(k1, n // 3)
    k2 = min(k2, max(k1 - 1, 1))
    return k1, k2


def k_reciprocal_distance(features: np.ndarray, k1: int = 20, k2: int = 6,
                          lambda_rr: float = 0.3) -> np.ndarray:
    """All-versus-all k-reciprocal encoding distance (row-normalized, not
    symmetrized). Features are L2-normalized first; the original distance
    is 2 - 2*cos divided by its row maximum."""
    x = l2_normalize_rows(np.asarray(features, dtype=np.float64))
    n = x.shape[0]
    if not (n > k1 > k2 >= 1):
        raise ValueError(f"need n > k1 > k2 >= 1, got n={n}, k1={k1}, k2={k2}")
    if not 0.0 <= lambda_rr <= 1.0:
        raise ValueError("lambda_rr must be in [0, 1]")
    dist = np.maximum(2.0 - 2.0 * (x @ x.T), 0.0)
    dist = 0.5 * (dist + dist.T)
    dist = dist / dist.max(axis=1, keepdims=True)
    initial_rank = np.argsort(dist, axis=1, kind="stable")
    half = int(np.around(k1 / 2))

    V = np.zeros((n, n))
    for i in range(n):
        recip = _k_reciprocal(initial_rank, i, k1)
        expansion = recip
        for cand in recip:
            cand_recip = _k_reciprocal(initial_rank, cand, half)
            if np.intersect1d(cand_recip, recip).size > 2.0 / 3.0 * cand_recip.size:
                expansion = np.append(expansion, cand_recip)
        expansion = np.unique(expansion)
        w = np.exp(-dist[i, expansion])
        V[i, expansion] = w / w.sum()
    if k2 != 1:
        V = V[initial_rank[:, :k2]].mean(axis=1)

    jac = np.empty((n, n))
    for i in range(n):
        tmin = np.minimum(V[i][None, :], V).sum(axis=1)
        jac[i] = 1.0 - tmin / (2.0 - tmin)
    return jac * (1.0 - lambda_rr) + dist * lambda_rr


def k_reciprocal_rerank(features: np.ndarray, k1: int = 20, k2: int = 6,
                        lambda_rr: float = 0.3) -> SimilarityMatrix:
    d = k_reciprocal_distance(features, k1, k2, lambda_rr)
    d = 0.5 * (d + d.T)
    return SimilarityMatrix(1.0 - d, KIND_RERANKED)
