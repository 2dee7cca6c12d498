"""Retrieval metrics, similarity-distribution histograms and PCA export."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import SimilarityMatrix

POPULATIONS = ("same_id_same_cam", "same_id_cross_cam", "diff_id_same_cam", "diff_id_cross_cam")


@dataclass(frozen=True)
class RetrievalProtocol:
    """Query/gallery index sets. Gallery items sharing both identity and
    camera with a query are dropped for that query."""

    query: np.ndarray
    gallery: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.query, dtype=np.int64)
        g = np.asarray(self.gallery, dtype=np.int64)
        if np.intersect1d(q, g).size:
            raise ValueError("query and gallery overlap")
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "gallery", g)


@dataclass
class RetrievalResult:
    cmc: np.ndarray
    mAP: float
    num_queries: int
    excluded_queries: list[int] = field(default_factory=list)

    def rank(self, k: int) -> float:
        if self.cmc.size == 0:
            return 0.0
        return float(self.cmc[min(k, self.cmc.size) - 1])

    def to_metrics(self) -> dict:
        return {
            "rank1": self.rank(1),
            "rank5": self.rank(5),
            "rank10": self.rank(10),
            "mAP": float(self.mAP),
            "num_queries": int(self.num_queries),
            "excluded_queries": len(self.excluded_queries),
        }


def average_precision(matches: np.ndarray) -> float:
    """Mean of precision at each positive's rank; ``matches`` is the
    boolean hit vector in ranked order."""
    hits = np.flatnonzero(matches)
    if hits.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def cmc_map(S_qg: np.ndarray, protocol: RetrievalProtocol, identities, cameras) -> RetrievalResult:
    """Rank gallery by descending similarity (ties: lowest gallery id)."""
    S_qg = np.asarray(S_qg, dtype=np.float64)
    q, g = protocol.query, protocol.gallery
    if S_qg.shape != (q.size, g.size):
        raise ValueError(f"S_qg shape {S_qg.shape} does not match protocol")
    ids = np.asarray(identities)
    cams = np.asarray(cameras)
    cmc = np.zeros(g.size)
    aps = []
    excluded = []
    for row, qi in enumerate(q):
        keep = ~((ids[g] == ids[qi]) & (cams[g] == cams[qi]))
        matches_all = ids[g] == ids[qi]
        if not np.any(matches_all & keep):
            excluded.append(int(qi))
            continue
        order = np.lexsort((g, -S_qg[row]))
        order = order[keep[order]]
        matches = matches_all[order]
        first = int(np.argmax(matches))
        cmc[first:] += 1
        aps.append(average_precision(matches))
    valid = len(aps)
    if valid:
        cmc /= valid
    return RetrievalResult(cmc, float(np.mean(aps)) if valid else 0.0, valid, excluded)


@dataclass
class SimilarityHistogram:
    edges: np.ndarray
    counts: dict[str, np.ndarray]
    means: dict[str, float]

    def rows(self):
        for pop in POPULATIONS:
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts[pop]):
                yield pop, float(lo), float(hi), int(c)

    def gap(self) -> float:
        """Mean normalized similarity of same-id cross-camera pairs minus
        that of different-id cross-camera pairs."""
        return self.means["same_id_cross_cam"] - self.means["diff_id_cross_cam"]


def similarity_histogram(S, identities, cameras, bins: int = 20) -> SimilarityHistogram:
    S = S.values if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)
    ids = np.asarray(identities)
    cams = np.asarray(cameras)
    n = S.shape[0]
    if S.shape != (n, n) or ids.shape != (n,) or cams.shape != (n,):
        raise ValueError("similarity matrix and label vectors disagree in size")
    iu, ju = np.triu_indices(n, 1)
    vals = S[iu, ju]
    lo, hi = (vals.min(), vals.max()) if vals.size else (0.0, 0.0)
    norm = (vals - lo) / (hi - lo) if hi > lo else np.zeros_like(vals)
    same_id = ids[iu] == ids[ju]
    same_cam = cams[iu] == cams[ju]
    masks = {
        "same_id_same_cam": same_id & same_cam,
        "same_id_cross_cam": same_id & ~same_cam,
        "diff_id_same_cam": ~same_id & same_cam,
        "diff_id_cross_cam": ~same_id & ~same_cam,
    }
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, means = {}, {}
    for pop, m in masks.items():
        counts[pop] = np.histogram(norm[m], bins=edges)[0]
        means[pop] = float(norm[m].mean()) if m.any() else float("nan")
    return SimilarityHistogram(edges, counts, means)


def pca2d(E) -> np.ndarray:
    X = np.asarray(E, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ValueError("pca2d needs at least 3 embeddings")
    if X.shape[1] < 2:
        raise ValueError("pca2d needs dimension >= 2")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / X.shape[0]
    w, V = np.linalg.eigh(cov)
    top = V[:, np.argsort(w, kind="stable")[::-1][:2]]
    for k in range(2):
        if top[np.argmax(np.abs(top[:, k])), k] < 0:
            top[:, k] = -top[:, k]
    return Xc @ top


def write_metrics(path: str | Path, metrics: dict) -> None:
    Path(path).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")


def write_histogram_csv(path: str | Path, hist: SimilarityHistogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["population", "bin_lo", "bin_hi", "count"])
        for pop, lo, hi, c in hist.rows():
            w.writerow([pop, f"{lo:.6f}", f"{hi:.6f}", c])
