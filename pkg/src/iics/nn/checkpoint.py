"""Binary checkpoint for an encoder and its classifier heads.

Layout (little-endian)::

    b"IICSCK01"
    u32 version (=1)
    u32 raw_input, u32 in_channels, u32 length, u32 mix_channels, u32 dim,
    u32 sharing (0 channel, 1 block, 2 layer), u32 learn_alpha, u32 n_alpha,
    u32 pool_relu
    f32 aibn eps, f32 aibn momentum, f32 neck eps, f32 neck momentum
    tensors as f32, in order (trunk tensors omitted when raw_input = 1):
        mix [mix_channels*in_channels], aibn.alpha [n_alpha],
        aibn.gamma, aibn.beta, aibn.running_mean, aibn.running_var [mix_channels each],
        proj.w [dim*mix_channels*length], proj.b [dim],
        neck.scale, neck.running_mean, neck.running_var [dim each]
    u32 n_heads, then per head: i32 camera (-1 = global), u32 M, u32 dim,
        weights [M*dim] f32, bias [M] f32
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .aibn import SHARING_MODES
from .losses import ClassifierHead
from .model import EncoderModel

MAGIC = b"IICSCK01"
VERSION = 1
_DIMS = struct.Struct("<IIIIIIIII")
_SCALARS = struct.Struct("<ffff")


def _trunk_order(model: EncoderModel) -> list[tuple[str, int]]:
    if model.raw_input:
        trunk = []
    else:
        co, ci, L, d = model.mix_channels, model.in_channels, model.length, model.dim
        trunk = [
            ("mix", co * ci), ("aibn.alpha", model.aibn.alpha.size),
            ("aibn.gamma", co), ("aibn.beta", co),
            ("aibn.running_mean", co), ("aibn.running_var", co),
            ("proj.w", d * co * L), ("proj.b", d),
        ]
    d = model.dim
    return trunk + [("neck.scale", d), ("neck.running_mean", d), ("neck.running_var", d)]


def _get(model: EncoderModel, name: str) -> np.ndarray:
    if name == "aibn.running_mean":
        return model.aibn.running_mean
    if name == "aibn.running_var":
        return model.aibn.running_var
    if name == "neck.running_mean":
        return model.neck_running_mean
    if name == "neck.running_var":
        return model.neck_running_var
    return model.params[name]


def save_checkpoint(path: str | Path, model: EncoderModel,
                    heads: list[ClassifierHead] = ()) -> None:
    aibn = model.aibn
    dims = _DIMS.pack(
        int(model.raw_input), model.in_channels, model.length, model.mix_channels,
        model.dim, SHARING_MODES.index(aibn.sharing) if aibn else 1,
        int(aibn.learn_alpha) if aibn else 1, aibn.alpha.size if aibn else 0,
        int(model.pool_relu),
    )
    scalars = _SCALARS.pack(aibn.eps if aibn else 0.0, aibn.momentum if aibn else 0.0,
                            model.neck_eps, model.neck_momentum)
    parts = [MAGIC, struct.pack("<I", VERSION), dims, scalars]
    for name, size in _trunk_order(model):
        arr = _get(model, name).astype("<f4").reshape(-1)
        assert arr.size == size, name
        parts.append(arr.tobytes())
    parts.append(struct.pack("<I", len(heads)))
    for h in heads:
        cam = -1 if h.camera is None else h.camera
        parts.append(struct.pack("<iII", cam, h.num_classes, h.weights.shape[1]))
        parts.append(h.weights.astype("<f4").tobytes())
        parts.append(h.bias.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[EncoderModel, list[ClassifierHead]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not an IICSCK01 checkpoint")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    raw_input, ci, L, co, d, sharing, learn_alpha, n_alpha, pool_relu = _DIMS.unpack_from(raw, off)
    off += _DIMS.size
    a_eps, a_mom, n_eps, n_mom = _SCALARS.unpack_from(raw, off)
    off += _SCALARS.size
    if raw_input:
        model = EncoderModel(ci, L, raw_input=True, neck_eps=n_eps, neck_momentum=n_mom)
    else:
        model = EncoderModel(ci, L, mix_channels=co, dim=d, sharing=SHARING_MODES[sharing],
                             learn_alpha=bool(learn_alpha), rng=np.random.default_rng(0),
                             neck_eps=n_eps, neck_momentum=n_mom, pool_relu=bool(pool_relu))
        model.aibn.eps, model.aibn.momentum = a_eps, a_mom

    def take(count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).astype(np.float64)
        off += 4 * count
        return arr

    for name, size in _trunk_order(model):
        target = _get(model, name)
        target[...] = take(size).reshape(target.shape)
    (n_heads,) = struct.unpack_from("<I", raw, off)
    off += 4
    heads = []
    for _ in range(n_heads):
        cam, M, hd = struct.unpack_from("<iII", raw, off)
        off += 12
        w = take(M * hd).reshape(M, hd)
        b = take(M)
        heads.append(ClassifierHead(w, b, None if cam < 0 else cam))
    return model, heads
