"""Synthetic camera-partitioned data with known identities.

Each sample is ``gain_c * (A_p + S_c + Q_c) + E_n``: a per-identity
appearance tensor, a per-camera additive channel offset, a per-camera
elementwise pattern, a per-camera multiplicative channel gain, and
elementwise noise. Setting ``camera_pattern_scale=0`` drops ``Q_c``.

Dataset file layout (little-endian)::

    b"IICSDS01"
    u32 n, u32 C, u32 channels, u32 length, u8 flags
    n records: u32 camera, [u32 identity if flags & 1], channels*length f32
    optional trailer: u32 byte count + UTF-8 JSON metadata

``flags`` bit 0 marks stored identities, bit 1 marks an embedding-mode
dataset (imported feature vectors, channels == 1).
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, make_rng

MAGIC = b"IICSDS01"
_HEADER = struct.Struct("<IIIIB")
FLAG_IDENTITY = 1
FLAG_EMBEDDING = 2


@dataclass(frozen=True)
class GenConfig:
    num_identities: int = 40
    num_cameras: int = 4
    samples_per_identity_per_camera: tuple[int, int] = (4, 8)
    channels: int = 8
    length: int = 16
    identity_scale: float = 1.0
    camera_offset_scale: float = 0.8
    noise_scale: float = 0.3
    camera_gain_range: tuple[float, float] = (0.7, 1.3)
    camera_pattern_scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "samples_per_identity_per_camera",
            tuple(int(v) for v in self.samples_per_identity_per_camera),
        )
        object.__setattr__(
            self, "camera_gain_range", tuple(float(v) for v in self.camera_gain_range)
        )
        self.validate()

    def validate(self) -> None:
        lo, hi = self.samples_per_identity_per_camera
        g_lo, g_hi = self.camera_gain_range
        checks = [
            ("num_identities", self.num_identities >= 2),
            ("num_cameras", self.num_cameras >= 2),
            ("samples_per_identity_per_camera", 1 <= lo <= hi),
            ("channels", self.channels >= 1),
            ("length", self.length >= 2),
            ("identity_scale", np.isfinite(self.identity_scale) and self.identity_scale > 0),
            ("camera_offset_scale",
             np.isfinite(self.camera_offset_scale) and self.camera_offset_scale >= 0),
            ("noise_scale", np.isfinite(self.noise_scale) and self.noise_scale >= 0),
            ("camera_pattern_scale",
             np.isfinite(self.camera_pattern_scale) and self.camera_pattern_scale >= 0),
            ("camera_gain_range", 0 < g_lo <= g_hi and np.isfinite(g_hi)),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"invalid GenConfig field {name!r}: {getattr(self, name)!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["samples_per_identity_per_camera"] = list(self.samples_per_identity_per_camera)
        d["camera_gain_range"] = list(self.camera_gain_range)
        return d


def generate(cfg: GenConfig) -> Dataset:
    """Draw a dataset; signals are rounded to float32 precision so that a
    saved-and-reloaded dataset is identical to the in-memory one."""
    rng = make_rng(cfg.seed)
    P, C, Ch, L = cfg.num_identities, cfg.num_cameras, cfg.channels, cfg.length
    appearance = rng.normal(0.0, cfg.identity_scale, size=(P, Ch, L))
    offsets = rng.normal(0.0, 1.0, size=(C, Ch)) * cfg.camera_offset_scale
    gains = rng.uniform(*cfg.camera_gain_range, size=(C, Ch))
    lo, hi = cfg.samples_per_identity_per_camera
    counts = rng.integers(lo, hi + 1, size=(P, C))
    patterns = np.zeros((C, Ch, L))
    if cfg.camera_pattern_scale > 0:
        patterns = rng.normal(0.0, 1.0, size=(C, Ch, L)) * cfg.camera_pattern_scale

    signals, cams, ids = [], [], []
    for p in range(P):
        for c in range(C):
            m = int(counts[p, c])
            noise = rng.normal(0.0, 1.0, size=(m, Ch, L)) * cfg.noise_scale
            base = gains[c][:, None] * (appearance[p] + offsets[c][:, None] + patterns[c])
            signals.append(base[None] + noise)
            cams.extend([c] * m)
            ids.extend([p] * m)
    x = np.concatenate(signals).astype(np.float32).astype(np.float64)
    return Dataset(
        signals=x,
        cameras=np.array(cams),
        num_cameras=C,
        identities=np.array(ids),
        meta={"source": "synthetic", "gen": cfg.to_dict()},
    )


def split_by_camera(ds: Dataset) -> list[np.ndarray]:
    return [np.flatnonzero(ds.cameras == c) for c in range(ds.num_cameras)]


def make_query_gallery(
    ds: Dataset, rng: np.random.Generator, query_fraction: float = 0.25
) -> tuple[np.ndarray, np.ndarray]:
    """Per-identity split into disjoint query and gallery index sets.

    Every query keeps at least one same-identity gallery item recorded by a
    different camera. Identities seen by a single camera are gallery-only.
    """
    if not 0.0 < query_fraction < 1.0:
        raise ValueError("query_fraction must be in (0, 1)")
    if ds.identities is None:
        raise ValueError("query/gallery split needs identities")
    query: list[int] = []
    for p in np.unique(ds.identities):
        members = np.flatnonzero(ds.identities == p)
        if np.unique(ds.cameras[members]).size < 2:
            continue
        target = int(round(query_fraction * members.size))
        chosen: list[int] = []
        for idx in rng.permutation(members):
            if len(chosen) >= target:
                break
            trial = chosen + [int(idx)]
            rest = np.setdiff1d(members, trial)
            rest_cams = set(ds.cameras[rest].tolist())
            if all(rest_cams - {int(ds.cameras[q])} for q in trial):
                chosen = trial
        query.extend(chosen)
    q = np.array(sorted(query), dtype=np.int64)
    g = np.setdiff1d(np.arange(len(ds)), q)
    return q, g


def save_dataset(ds: Dataset, path: str | Path) -> None:
    n, ch, length = ds.signals.shape
    has_id = ds.identities is not None
    flags = (FLAG_IDENTITY if has_id else 0) | (FLAG_EMBEDDING if ds.embedding_mode else 0)
    fields = [("camera", "<u4")]
    if has_id:
        fields.append(("identity", "<u4"))
    fields.append(("signal", "<f4", (ch * length,)))
    rec = np.zeros(n, dtype=np.dtype(fields))
    rec["camera"] = ds.cameras
    if has_id:
        rec["identity"] = ds.identities
    rec["signal"] = ds.signals.reshape(n, -1)
    meta = json.dumps(ds.meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(n, ds.num_cameras, ch, length, flags))
        fh.write(rec.tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def load_dataset(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not an IICSDS01 dataset file")
    n, C, ch, length, flags = _HEADER.unpack_from(raw, 8)
    has_id = bool(flags & FLAG_IDENTITY)
    fields = [("camera", "<u4")]
    if has_id:
        fields.append(("identity", "<u4"))
    fields.append(("signal", "<f4", (ch * length,)))
    dtype = np.dtype(fields)
    start = 8 + _HEADER.size
    end = start + n * dtype.itemsize
    if len(raw) < end:
        raise ValueError(f"{path}: truncated dataset file")
    rec = np.frombuffer(raw, dtype=dtype, count=n, offset=start)
    meta = {}
    if len(raw) >= end + 4:
        (mlen,) = struct.unpack_from("<I", raw, end)
        meta = json.loads(raw[end + 4:end + 4 + mlen].decode())
    return Dataset(
        signals=rec["signal"].astype(np.float64).reshape(n, ch, length),
        cameras=rec["camera"].astype(np.int64),
        num_cameras=C,
        identities=rec["identity"].astype(np.int64) if has_id else None,
        embedding_mode=bool(flags & FLAG_EMBEDDING),
        meta=meta,
    )
