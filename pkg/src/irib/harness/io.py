"""Image, manifest and run-directory helpers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

RUN_SUBDIRS = ("checkpoints", "images/elq", "images/lq", "images/hq", "images/restored", "manifests")


def to_uint8(chw) -> np.ndarray:
    """HWC uint8 from a CHW image in [0, 1]; ``np.round`` rounds half to even."""
    x = np.clip(np.asarray(chw, dtype=np.float64), 0.0, 1.0)
    return np.round(x * 255.0).astype(np.uint8).transpose(1, 2, 0)


def save_png(path, chw) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = to_uint8(chw)
    mode = "L" if arr.shape[2] == 1 else "RGB"
    Image.fromarray(arr[:, :, 0] if mode == "L" else arr, mode).save(path, format="PNG")
    return path


def load_png(path) -> np.ndarray:
    """CHW float64 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def load_png_dir(directory) -> tuple[list, np.ndarray]:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG files in {directory}")
    return paths, np.stack([load_png(p) for p in paths])


def make_run_dir(root) -> Path:
    root = Path(root)
    for sub in RUN_SUBDIRS:
        (root / sub).mkdir(parents=True, exist_ok=True)
    return root


def write_manifests(directory, manifests, prefix):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(manifests):
        (directory / f"{prefix}_{i:04d}.json").write_text(m.to_json() + "\n", encoding="utf-8")


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
