"""Evaluation metrics: PSNR, SSIM, blur-MSE and feature-space proxies."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..numerics import Tensor, gaussian_blur, no_grad

PSNR_CAP = 99.0


def psnr(a, b) -> np.ndarray:
    """Per-image ``10 log10(1 / MSE)`` for [0, 1] images, capped at 99 dB."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a, b = a[None], b[None]
    mse = ((a - b) ** 2).reshape(a.shape[0], -1).mean(axis=1)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(1.0 / mse)
    return np.minimum(out, PSNR_CAP)


def _gauss1d(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x, g):
    x = sliding_window_view(x, g.size, axis=-1) @ g
    return np.moveaxis(sliding_window_view(np.moveaxis(x, -2, -1), g.size, axis=-1) @ g, -1, -2)


def ssim(a, b, win=11, sigma=1.5, k1=0.01, k2=0.03) -> np.ndarray:
    """Per-image single-scale SSIM (Gaussian window, valid region, averaged over channels)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < win:
        raise ValueError(f"images smaller than the {win}x{win} SSIM window")
    g = _gauss1d(win, sigma)
    c1, c2 = k1 ** 2, k2 ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a ** 2
    sbb = _filter_valid(b * b, g) - mu_b ** 2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * sab + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2))
    return smap.reshape(a.shape[0], -1).mean(axis=1)


def blur_mse_metric(a, b, tau=1.0) -> np.ndarray:
    """Per-image mean squared difference after a shared Gaussian blur."""
    with no_grad():
        d = gaussian_blur(Tensor(np.asarray(a) - np.asarray(b)), tau).data
    return (d ** 2).reshape(d.shape[0], -1).mean(axis=1)


def _batched(fn, x, batch=32):
    return np.concatenate([fn(x[i:i + batch]) for i in range(0, len(x), batch)])


def perceptual_proxy(a, b, features) -> np.ndarray:
    """Per-image mean squared distance between fixed random feature maps."""
    with no_grad():
        def dist(idx):
            fa = features.feature_map(Tensor(a[idx])).data
            fb = features.feature_map(Tensor(b[idx])).data
            return ((fa - fb) ** 2).reshape(fa.shape[0], -1).mean(axis=1)
        return np.concatenate([dist(slice(i, i + 32)) for i in range(0, len(a), 32)])


EMBED_EPS = 1e-2


def embed(x, features) -> np.ndarray:
    """Per-image ``log(eps + [spatial mean, spatial std])`` of each feature channel.

    Mean pooling alone is nearly blind to blur on smooth content; adding the
    spread of each response and working in log space makes the embedding
    track the loss of fine structure.
    """
    def stats(chunk):
        with no_grad():
            f = features.feature_map(Tensor(chunk)).data
        return np.log(EMBED_EPS + np.concatenate([f.mean(axis=(2, 3)), f.std(axis=(2, 3))], axis=1))

    return _batched(stats, np.asarray(x))


def frechet_distance(mu1, s1, mu2, s2) -> float:
    """``|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))``.

    The trace of the matrix root is taken from the eigenvalues of the
    symmetric product ``S1^(1/2) S2 S1^(1/2)``, which shares them with ``S1 S2``.
    """
    w, v = np.linalg.eigh((s1 + s1.T) / 2)
    root1 = (v * np.sqrt(np.clip(w, 0, None))) @ v.T
    m = root1 @ s2 @ root1
    ev = np.linalg.eigvalsh((m + m.T) / 2)
    tr_root = float(np.sqrt(np.clip(ev, 0, None)).sum())
    d = float(((mu1 - mu2) ** 2).sum() + np.trace(s1) + np.trace(s2) - 2 * tr_root)
    return max(d, 0.0)


def gaussian_fit(emb):
    emb = np.asarray(emb, dtype=np.float64)
    return emb.mean(axis=0), np.cov(emb, rowvar=False)


def fid_proxy(a, b, features) -> float:
    """Fréchet distance between Gaussian fits of :func:`embed` of two image sets."""
    return frechet_distance(*gaussian_fit(embed(a, features)), *gaussian_fit(embed(b, features)))


@dataclass
class MetricsRow:
    method: str
    lfo: int
    psnr: float
    ssim: float
    blur_mse: float
    perc_proxy: float
    fid_proxy: float

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]


def compute_row(method, lfo, restored, target, features, tau=1.0) -> MetricsRow:
    restored, target = np.asarray(restored), np.asarray(target)
    return MetricsRow(
        method=method, lfo=int(lfo),
        psnr=float(psnr(restored, target).mean()),
        ssim=float(ssim(restored, target).mean()),
        blur_mse=float(blur_mse_metric(restored, target, tau).mean()),
        perc_proxy=float(perceptual_proxy(restored, target, features).mean()),
        fid_proxy=fid_proxy(restored, target, features),
    )


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(MetricsRow.header())
    for r in rows:
        w.writerow([_fmt(v) for v in astuple(r)])
    return buf.getvalue()


def write_metrics_csv(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv(rows))
    return path


def read_metrics_csv(path):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [MetricsRow(r["method"], int(r["lfo"]), *(float(r[k]) for k in MetricsRow.header()[2:]))
                for r in reader]
