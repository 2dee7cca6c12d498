"""Classifier heads, softmax cross entropy and batch-hard triplet loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..similarity import ScoreVector


@dataclass
class ClassifierHead:
    weights: np.ndarray
    bias: np.ndarray
    camera: int | None = None

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("head weights must be [M, d] with bias [M]")
        if self.num_classes < 2:
            raise ValueError("a classifier head needs at least 2 classes")

    @classmethod
    def init(cls, num_classes: int, dim: int, rng: np.random.Generator,
             camera: int | None = None, std: float = 0.001) -> "ClassifierHead":
        return cls(rng.normal(0.0, std, size=(num_classes, dim)),
                   np.zeros(num_classes), camera)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def logits(self, f: np.ndarray) -> np.ndarray:
        return f @ self.weights.T + self.bias

    def parameters(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.w": self.weights, f"{prefix}.b": self.bias}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_ce(head: ClassifierHead, f: np.ndarray, labels):
    """Mean cross entropy over a batch (or a single embedding).

    Returns (loss, grads) with grads ``{"w", "b", "f"}``; ``grads["f"]`` has
    the shape of ``f``.
    """
    single = np.ndim(f) == 1
    f2 = np.atleast_2d(np.asarray(f, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if y.shape[0] != f2.shape[0]:
        raise ValueError("one label per embedding required")
    M = head.num_classes
    if y.size and (y.min() < 0 or y.max() >= M):
        raise ValueError(f"label out of range [0, {M})")
    N = f2.shape[0]
    logits = head.logits(f2)
    logp = log_softmax(logits)
    loss = -logp[np.arange(N), y].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(N), y] -= 1.0
    dlogits /= N
    grads = {
        "w": dlogits.T @ f2,
        "b": dlogits.sum(axis=0),
        "f": (dlogits @ head.weights)[0] if single else dlogits @ head.weights,
    }
    return float(loss), grads


def pairwise_euclidean(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def batch_hard_triplet(embeddings: np.ndarray, labels, margin: float = 0.3):
    """Hardest-positive / hardest-negative triplet loss, mean over anchors.

    Ties pick the lowest index; zero-length differences and inactive hinges
    contribute zero gradient.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    N = x.shape[0]
    _, counts = np.unique(y, return_counts=True)
    if counts.size < 2 or counts.min() < 2:
        raise ValueError("invalid triplet batch")
    dist = pairwise_euclidean(x)
    same = y[:, None] == y[None, :]
    eye = np.eye(N, dtype=bool)
    pos_mask = same & ~eye
    neg_mask = ~same

    d_pos = np.where(pos_mask, dist, -np.inf)
    d_neg = np.where(neg_mask, dist, np.inf)
    hp = np.argmax(d_pos, axis=1)
    hn = np.argmin(d_neg, axis=1)
    rows = np.arange(N)
    d_ap = dist[rows, hp]
    d_an = dist[rows, hn]
    hinge = margin + d_ap - d_an
    loss = np.maximum(hinge, 0.0).mean()

    grad = np.zeros_like(x)
    active = hinge > 0
    for i in np.flatnonzero(active):
        for j, sign in ((hp[i], 1.0), (hn[i], -1.0)):
            d = dist[i, j]
            if d > 0:
                u = (x[i] - x[j]) / d
                grad[i] += sign * u
                grad[j] -= sign * u
    grad /= N
    return float(loss), grad


def classify_scores(heads: list[ClassifierHead], f: np.ndarray) -> ScoreVector:
    """Concatenated per-camera softmax scores for one embedding or a batch."""
    if not heads:
        raise ValueError("missing camera head(s)")
    cams = [h.camera for h in heads]
    if cams != list(range(len(heads))):
        raise ValueError(f"heads must be ordered by camera 0..C-1, got {cams}")
    blocks = [softmax(h.logits(np.asarray(f, dtype=np.float64))) for h in heads]
    layout = tuple((c, h.num_classes) for c, h in enumerate(heads))
    return ScoreVector(np.concatenate(blocks, axis=-1), layout)
