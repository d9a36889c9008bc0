"""Binary checkpoints: header, JSON architecture descriptor, named float64 blobs.

Layout (all integers little-endian)::

    b"IRIBCKPT"  uint32 version  uint32 arch_len  arch JSON (utf-8)
    uint32 count
    count x { uint16 name_len  name  uint8 ndim  uint32 dims[ndim]  float64 data[...] }
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .conditioning import FeatureExtractor
from .nets import Projector, ResidualNet, Restorer
from .prior import NoiseSchedule, PriorScore

MAGIC = b"IRIBCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _build(arch: dict):
    kind = arch.get("kind")
    net_keys = ("in_ch", "out_ch", "width", "blocks", "cond_dim", "output", "seed", "film_std")
    if kind in ("projector", "restorer", "residual_net"):
        cls = {"projector": Projector, "restorer": Restorer, "residual_net": ResidualNet}[kind]
        return cls(**{k: arch[k] for k in net_keys})
    if kind == "prior_score":
        net = arch["net"]
        model = PriorScore(NoiseSchedule(**arch["schedule"]), width=net["width"],
                           blocks=net["blocks"], time_dim=arch["time_dim"], seed=net["seed"])
        return model
    if kind == "feature_extractor":
        return FeatureExtractor(arch["seed"], arch["in_ch"], arch["mid"], arch["out"])
    raise CheckpointError(f"unknown architecture kind {kind!r}")


def save_checkpoint(path, model, extra: dict | None = None) -> Path:
    arch = dict(model.arch())
    if extra:
        arch["extra"] = extra
    blob = json.dumps(arch, sort_keys=True, separators=(",", ":")).encode()
    state = model.state_dict() if hasattr(model, "state_dict") else {}
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(blob)) + blob
    out += struct.pack("<I", len(state))
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        key = name.encode()
        out += struct.pack("<H", len(key)) + key
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(out))
    return path


def read_checkpoint(path):
    """Return ``(arch, state)`` without building a model."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, alen = struct.unpack_from("<II", raw, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        pos = 16
        arch = json.loads(raw[pos:pos + alen].decode())
        pos += alen
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        state = {}
        for _ in range(count):
            (klen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + klen].decode()
            pos += klen
            (ndim,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            state[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except (struct.error, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from None
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return arch, state


def load_checkpoint(path):
    arch, state = read_checkpoint(path)
    model = _build(arch)
    if state:
        model.load_state_dict(state)
    return model
