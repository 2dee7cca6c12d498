"""Shared data model, seeded RNG and dense similarity primitives."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

MAX_SAMPLES = 20_000
NORM_EPS = 1e-12

KIND_COSINE = "cosine"
KIND_RERANKED = "reranked"
KIND_INTER = "inter"
SIMILARITY_KINDS = (KIND_COSINE, KIND_RERANKED, KIND_INTER)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; streams are identical across platforms for a given seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


@dataclass(frozen=True)
class Sample:
    id: int
    camera: int
    signal: np.ndarray
    true_identity: int | None = None


@dataclass
class Dataset:
    """Camera-partitioned samples stored as stacked arrays.

    ``signals`` has shape [n, channels, length]. ``identities`` is None for
    unlabeled imports. ``embedding_mode`` marks imported feature vectors
    (channels == 1, length == d) that bypass the encoder trunk.
    """

    signals: np.ndarray
    cameras: np.ndarray
    num_cameras: int
    identities: np.ndarray | None = None
    embedding_mode: bool = False
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.signals = np.asarray(self.signals, dtype=np.float64)
        self.cameras = np.asarray(self.cameras, dtype=np.int64)
        if self.signals.ndim != 3:
            raise ValueError("signals must have shape [n, channels, length]")
        n = self.signals.shape[0]
        if self.cameras.shape != (n,):
            raise ValueError("cameras must have one entry per sample")
        if n > MAX_SAMPLES:
            raise ValueError(f"dataset has {n} samples; limit is {MAX_SAMPLES}")
        if not np.all(np.isfinite(self.signals)):
            raise ValueError("non-finite signal values")
        if self.num_cameras < 2:
            raise ValueError("num_cameras must be >= 2")
        if n and (self.cameras.min() < 0 or self.cameras.max() >= self.num_cameras):
            raise ValueError("camera index out of range")
        present = np.unique(self.cameras)
        if len(present) != self.num_cameras:
            missing = sorted(set(range(self.num_cameras)) - set(present.tolist()))
            raise ValueError(f"empty camera(s): {missing}")
        if self.identities is not None:
            self.identities = np.asarray(self.identities, dtype=np.int64)
            if self.identities.shape != (n,):
                raise ValueError("identities must have one entry per sample")
            if n and self.identities.min() < 0:
                raise ValueError("identities must be non-negative")

    def __len__(self) -> int:
        return self.signals.shape[0]

    @property
    def channels(self) -> int:
        return self.signals.shape[1]

    @property
    def length(self) -> int:
        return self.signals.shape[2]

    def camera_counts(self) -> np.ndarray:
        return np.bincount(self.cameras, minlength=self.num_cameras)

    def sample(self, i: int) -> Sample:
        ident = None if self.identities is None else int(self.identities[i])
        return Sample(i, int(self.cameras[i]), self.signals[i], ident)

    def check_min_per_camera(self, k_min: int) -> None:
        counts = self.camera_counts()
        if counts.min() < 2 * k_min:
            raise ValueError(
                f"camera {int(counts.argmin())} has {int(counts.min())} samples; "
                f"need at least {2 * k_min}"
            )


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    k: int

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError("labels out of range")
        if np.unique(labels).size != self.k:
            raise ValueError("every cluster must be non-empty")

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in SIMILARITY_KINDS:
            raise ValueError(f"unknown similarity kind {self.kind!r}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("similarity matrix must be square")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.values - self.values.T) <= tol))


def l2_normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite vector")
    norm = np.linalg.norm(v)
    if norm > NORM_EPS:
        return v / norm
    return v.copy()


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite vector")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    return x / safe


def cosine_matrix(embeddings: Sequence[np.ndarray] | np.ndarray) -> SimilarityMatrix:
    if isinstance(embeddings, np.ndarray):
        e = np.asarray(embeddings, dtype=np.float64)
        if e.ndim != 2:
            raise ValueError("embeddings must be a 2-D array")
    else:
        dims = {np.shape(v) for v in embeddings}
        if len(dims) > 1:
            raise ValueError(f"embedding dimension mismatch: {sorted(dims)}")
        e = np.asarray(embeddings, dtype=np.float64).reshape(len(embeddings), -1)
    u = l2_normalize_rows(e)
    s = u @ u.T
    # exact symmetry regardless of BLAS blocking
    s = 0.5 * (s + s.T)
    np.clip(s, -1.0, 1.0, out=s)
    nonzero = np.linalg.norm(e, axis=1) > NORM_EPS
    s[np.diag_indices_from(s)] = np.where(nonzero, 1.0, 0.0)
    return SimilarityMatrix(s, KIND_COSINE)
