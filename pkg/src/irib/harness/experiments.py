"""Evaluation grid, decomposition-vs-direct comparison, lambda_blur ablation, plug-and-play."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..lfo import condition_alignment, lfo_restore
from ..losses import write_jsonl
from ..models import extract_condition, load_checkpoint, save_checkpoint
from ..numerics import Tensor, no_grad
from .config import ExperimentConfig
from .data import PairSet, derive_seed, make_pairs
from .io import make_run_dir, save_png, write_json, write_manifests
from .metrics import MetricsRow, compute_row, psnr, write_metrics_csv
from .synth import synth_dataset
from .train import feature_extractor, train_direct, train_prior, train_projector, train_restorer

log = logging.getLogger(__name__)

TAG_TRAIN_CORPUS, TAG_TEST_CORPUS, TAG_TEST_PAIRS, TAG_ALT = 101, 102, 103, 104
EVAL_CHUNK = 32


def corpora(cfg: ExperimentConfig):
    """Training HQ corpus, test HQ corpus and test pairs for ``cfg``."""
    train = synth_dataset(cfg.n_train, cfg.image_size, derive_seed(cfg.run_seed, TAG_TRAIN_CORPUS))
    test = synth_dataset(cfg.n_test, cfg.image_size, derive_seed(cfg.run_seed, TAG_TEST_CORPUS))
    pairs = make_pairs(test, cfg.lq, cfg.elq, derive_seed(cfg.run_seed, TAG_TEST_PAIRS))
    return train, test, pairs


def _chunks(x):
    return [x[i:i + EVAL_CHUNK] for i in range(0, len(x), EVAL_CHUNK)]


def run_direct(d, x_elq, features) -> np.ndarray:
    with no_grad():
        return np.concatenate([d(Tensor(c), extract_condition(c, features)).data for c in _chunks(x_elq)])


def run_decomposed(f, g, x_elq, features, iterations=0) -> np.ndarray:
    return np.concatenate([lfo_restore(c, f, g, features, iterations).final_hq.data
                           for c in _chunks(x_elq)])


def evaluate(pairs: PairSet, features, projector=None, restorer=None, direct=None,
             lfo_iters=(0, 1, 2), tau=1.0, outputs=None):
    """Metric rows for the direct arm and each LFO count of the decomposed arm.

    Rows are ``("direct", 0)`` then ``("decomposed", n)`` for ``n`` in
    ``lfo_iters``. If ``outputs`` is a dict, restored images are stored in it.
    """
    if direct is None and (projector is None or restorer is None):
        raise ValueError("evaluate needs a direct model or a projector/restorer pair")
    rows = []
    if direct is not None:
        out = run_direct(direct, pairs.x_elq, features)
        rows.append(compute_row("direct", 0, out, pairs.z_hq, features, tau))
        if outputs is not None:
            outputs[("direct", 0)] = out
    if projector is not None and restorer is not None:
        for n in lfo_iters:
            out = run_decomposed(projector, restorer, pairs.x_elq, features, n)
            rows.append(compute_row("decomposed", n, out, pairs.z_hq, features, tau))
            if outputs is not None:
                outputs[("decomposed", n)] = out
    return rows


def mean_condition_alignment(pairs: PairSet, projector, restorer, features, iterations=1):
    """Mean cosine with ``Y(z_hq)`` of each LFO condition ``c^(1) .. c^(iterations+1)``."""
    per_chunk = []
    for i, chunk in enumerate(_chunks(pairs.x_elq)):
        tr = lfo_restore(chunk, projector, restorer, features, iterations)
        per_chunk.append(condition_alignment(tr, pairs.z_hq[i * EVAL_CHUNK:i * EVAL_CHUNK + len(chunk)],
                                             features))
    return np.concatenate(per_chunk, axis=1).mean(axis=1)


@dataclass
class Pipeline:
    """Everything trained for one configuration."""

    cfg: ExperimentConfig
    features: object
    train_hq: np.ndarray
    test_pairs: PairSet
    restorer: object = None
    prior: object = None
    projector: object = None
    direct: object = None
    histories: dict = field(default_factory=dict)


def build_pipeline(cfg: ExperimentConfig, direct=True) -> Pipeline:
    features = feature_extractor(cfg)
    train, _, pairs = corpora(cfg)
    p = Pipeline(cfg, features, train, pairs)
    p.restorer, p.histories["restorer"] = train_restorer(train, cfg, features=features)
    p.prior, p.histories["prior"] = train_prior(train, cfg)
    p.projector, p.histories["projector"] = train_projector(train, cfg, p.restorer, p.prior,
                                                            features=features)
    if direct:
        p.direct, p.histories["direct"] = train_direct(train, cfg, p.restorer, p.prior,
                                                       features=features)
    return p


@dataclass
class ComparisonReport:
    rows: list
    header: dict
    pipeline: Pipeline

    def row(self, method, lfo=0) -> MetricsRow:
        for r in self.rows:
            if r.method == method and r.lfo == lfo:
                return r
        raise KeyError((method, lfo))


def budget_header(p: Pipeline) -> dict:
    return {
        "projector_steps": p.histories["projector"].steps,
        "direct_steps": p.histories["direct"].steps if "direct" in p.histories else None,
        "projector_params": p.projector.n_params(),
        "direct_params": p.direct.n_params() if p.direct is not None else None,
    }


def write_run(out_dir, p: Pipeline, rows, outputs=None):
    """Emit the run directory: config, checkpoints, manifests, images, metrics, losses."""
    out = make_run_dir(out_dir)
    p.cfg.save(out / "config.json")
    for name in ("restorer", "prior", "projector", "direct"):
        model = getattr(p, name)
        if model is not None:
            save_checkpoint(out / "checkpoints" / f"{name}.ckpt", model)
    save_checkpoint(out / "checkpoints" / "features.ckpt", p.features)
    write_manifests(out / "manifests", p.test_pairs.lq_manifests, "lq")
    write_manifests(out / "manifests", p.test_pairs.elq_manifests, "elq")
    for i in range(len(p.test_pairs)):
        save_png(out / "images" / "hq" / f"{i:04d}.png", p.test_pairs.z_hq[i])
        save_png(out / "images" / "lq" / f"{i:04d}.png", p.test_pairs.x_lq[i])
        save_png(out / "images" / "elq" / f"{i:04d}.png", p.test_pairs.x_elq[i])
    if outputs:
        for (method, n), imgs in outputs.items():
            for i, im in enumerate(imgs):
                save_png(out / "images" / "restored" / f"{method}_lfo{n}_{i:04d}.png", im)
    write_metrics_csv(out / "metrics.csv", rows)
    if "projector" in p.histories:
        write_jsonl(out / "losses.jsonl", p.histories["projector"].reports)
    if "direct" in p.histories:
        write_jsonl(out / "losses_direct.jsonl", p.histories["direct"].reports)
    write_json(out / "run_header.json", budget_header(p) if p.projector is not None else {})
    return out


def run_comparison(cfg: ExperimentConfig, out_dir=None, pipeline: Pipeline | None = None) -> ComparisonReport:
    """Train both arms at equal budget and evaluate direct vs decomposed (+LFO)."""
    p = pipeline or build_pipeline(cfg, direct=True)
    outputs = {} if out_dir is not None else None
    rows = evaluate(p.test_pairs, p.features, p.projector, p.restorer, p.direct, cfg.lfo_iters,
                    cfg.weights.tau, outputs)
    if out_dir is not None:
        write_run(out_dir, p, rows, outputs)
    return ComparisonReport(rows, budget_header(p), p)


@dataclass
class AblationRow:
    lambda_blur: float
    psnr: float
    perc_proxy: float
    ssim: float
    fid_proxy: float


def ablate_lambda_blur(cfg: ExperimentConfig, restorer, prior, train_hq, pairs: PairSet,
                       features=None, lambdas=None, steps=None, out_dir=None, trained=None):
    """Train one projector per ``lambda_blur`` (other weights fixed) and score the plain chain.

    ``trained`` maps a lambda value to a projector already fitted with those
    weights, which is then scored instead of retrained.
    """
    features = features or feature_extractor(cfg)
    lambdas = cfg.ablation_lambdas if lambdas is None else tuple(lambdas)
    rows = []
    for lam in lambdas:
        w = cfg.weights.replace(lambda_blur=float(lam), lambda_l2=1.0, lambda_perc=1.0)
        f = (trained or {}).get(float(lam))
        if f is None:
            f, _ = train_projector(train_hq, cfg, restorer, prior, weights=w, steps=steps,
                                   features=features)
        out = run_decomposed(f, restorer, pairs.x_elq, features, 0)
        r = compute_row("decomposed", 0, out, pairs.z_hq, features, cfg.weights.tau)
        rows.append(AblationRow(float(lam), r.psnr, r.perc_proxy, r.ssim, r.fid_proxy))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.svg").write_text(tradeoff_svg(rows), encoding="utf-8")
        write_json(out / "ablation.json", [r.__dict__ for r in rows])
    return rows


def tradeoff_svg(rows, width=420, height=320, pad=50) -> str:
    """Scatter of perceptual proxy (x) against PSNR (y), one labelled point per lambda."""
    xs = np.array([r.perc_proxy for r in rows])
    ys = np.array([r.psnr for r in rows])

    def scale(v, lo, hi, a, b):
        return a + (b - a) * (0.5 if hi == lo else (v - lo) / (hi - lo))

    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">'
             f'perceptual proxy (lower is better)</text>',
             f'<text x="14" y="{height / 2}" text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 14 {height / 2})">PSNR (dB)</text>']
    for r, x, y in zip(rows, xs, ys):
        px = scale(x, x0, x1, pad + 20, width - pad - 20)
        py = scale(y, y0, y1, height - pad - 20, pad + 20)
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="steelblue"/>')
        parts.append(f'<text x="{px + 7:.2f}" y="{py - 7:.2f}" font-size="11">'
                     f'λ={r.lambda_blur:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass
class PlugAndPlayReport:
    rows: list
    warnings: list


def plug_and_play_eval(projector, alt_restorer, pairs: PairSet, features, projector_preset=None,
                       restorer_preset=None, method_prefix="alt"):
    """Score ``g'`` on ELQ inputs directly and behind the (unchanged) projector."""
    warnings = []
    if projector_preset is not None and restorer_preset is not None and projector_preset != restorer_preset:
        warnings.append(f"LQ preset mismatch: projector trained against {projector_preset!r}, "
                        f"restorer trained on {restorer_preset!r}")
    direct = run_direct(alt_restorer, pairs.x_elq, features)
    chained = run_decomposed(projector, alt_restorer, pairs.x_elq, features, 0)
    rows = [compute_row(f"{method_prefix}_direct", 0, direct, pairs.z_hq, features),
            compute_row(f"{method_prefix}_with_projector", 0, chained, pairs.z_hq, features)]
    return PlugAndPlayReport(rows, warnings)


def train_alt_restorer(cfg: ExperimentConfig, train_hq, features=None):
    """An independently seeded restorer of a different width on the same LQ preset."""
    return train_restorer(train_hq, cfg, seed=derive_seed(cfg.run_seed, TAG_ALT),
                          width=cfg.alt_restorer_width, features=features)


def load_models(ckpt_dir):
    d = Path(ckpt_dir)
    out = {}
    for name in ("restorer", "prior", "projector", "direct", "features"):
        path = d / f"{name}.ckpt"
        if path.exists():
            out[name] = load_checkpoint(path)
    return out


def restorer_gain(restorer, pairs: PairSet, features) -> np.ndarray:
    """Per-image PSNR gain (dB) of ``g(x_lq)`` over ``x_lq`` against ``z_hq``."""
    with no_grad():
        out = np.concatenate([restorer(Tensor(c), extract_condition(c, features)).data
                              for c in _chunks(pairs.x_lq)])
    return psnr(out, pairs.z_hq) - psnr(pairs.x_lq, pairs.z_hq)
