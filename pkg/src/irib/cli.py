"""Command-line entry point: ``irib <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .degrade import DegradationManifest, apply_manifest, get_preset, sample_manifest
from .harness import experiments as ex
from .harness.config import load_config
from .harness.data import derive_seed
from .harness.io import load_png, load_png_dir, save_png, write_json
from .harness.metrics import write_metrics_csv
from .harness.synth import synth_dataset
from .harness.train import feature_extractor, train_direct, train_prior, train_projector, train_restorer
from .lfo import lfo_restore
from .losses import write_jsonl
from .models import load_checkpoint, save_checkpoint

log = logging.getLogger("irib")


def _cfg(args):
    return load_config(args.config)


def _features(args, cfg):
    path = getattr(args, "ckpt_features", None)
    return load_checkpoint(path) if path else feature_extractor(cfg)


def _load(path, what):
    if path is None or not Path(path).exists():
        raise SystemExit(f"error: missing {what} checkpoint: {path}")
    return load_checkpoint(path)


def cmd_synth(args):
    cfg = _cfg(args)
    size = args.size or cfg.image_size
    imgs = synth_dataset(args.n, size, cfg.run_seed if args.seed is None else args.seed)
    out = Path(args.out)
    for i, im in enumerate(imgs):
        save_png(out / f"{i:04d}.png", im)
    print(f"wrote {len(imgs)} images to {out}")


def cmd_degrade(args):
    out = Path(args.out)
    src = Path(args.input)
    paths, imgs = ([src], load_png(src)[None]) if src.is_file() else load_png_dir(src)
    for i, (p, im) in enumerate(zip(paths, imgs)):
        if args.manifest:
            m = DegradationManifest.from_json(Path(args.manifest).read_text())
        else:
            m = sample_manifest(get_preset(args.preset), derive_seed(args.seed, i))
        y = apply_manifest(m, im[None]).data[0]
        save_png(out / f"{p.stem}.png", y)
        (out / f"{p.stem}.manifest.json").write_text(m.to_json() + "\n")
    print(f"degraded {len(paths)} images into {out}")


def cmd_train_restorer(args):
    cfg = _cfg(args)
    out = Path(args.out)
    train, _, pairs = ex.corpora(cfg)
    features = feature_extractor(cfg)
    g, hist = train_restorer(train, cfg, steps=args.steps, features=features)
    save_checkpoint(out / "restorer.ckpt", g)
    gain = float(np.mean(ex.restorer_gain(g, pairs, features)))
    write_json(out / "restorer_report.json", {"steps": hist.steps, "final_loss": hist.losses[-1] if hist.losses else None,
                                              "heldout_psnr_gain_db": gain})
    if args.with_prior:
        prior, _ = train_prior(train, cfg)
        save_checkpoint(out / "prior.ckpt", prior)
    print(f"restorer: {hist.steps} steps, held-out PSNR gain {gain:+.3f} dB")


def _prior(args, cfg, train, out):
    if args.ckpt_prior:
        return _load(args.ckpt_prior, "prior")
    prior, _ = train_prior(train, cfg)
    save_checkpoint(out / "prior.ckpt", prior)
    return prior


def cmd_train_projector(args):
    cfg = _cfg(args)
    out = Path(args.out)
    g = _load(args.ckpt_restorer, "restorer")
    train, _, _ = ex.corpora(cfg)
    prior = _prior(args, cfg, train, out)
    f, hist = train_projector(train, cfg, g, prior, steps=args.steps, features=feature_extractor(cfg))
    save_checkpoint(out / "projector.ckpt", f)
    write_jsonl(out / "losses.jsonl", hist.reports)
    print(f"projector: {hist.steps} steps, final total loss {hist.losses[-1] if hist.losses else float('nan'):.6g}")


def cmd_train_direct(args):
    cfg = _cfg(args)
    out = Path(args.out)
    g = _load(args.ckpt_restorer, "restorer")
    train, _, _ = ex.corpora(cfg)
    prior = _prior(args, cfg, train, out)
    d, hist = train_direct(train, cfg, g, prior, steps=args.steps, features=feature_extractor(cfg))
    save_checkpoint(out / "direct.ckpt", d)
    write_jsonl(out / "losses_direct.jsonl", hist.reports)
    print(f"direct: {hist.steps} steps")


def cmd_eval(args):
    cfg = _cfg(args)
    d = Path(args.ckpt_dir)
    f = _load(d / "projector.ckpt", "projector")
    g = _load(d / "restorer.ckpt", "restorer")
    direct = load_checkpoint(d / "direct.ckpt") if (d / "direct.ckpt").exists() else None
    _, _, pairs = ex.corpora(cfg)
    rows = ex.evaluate(pairs, feature_extractor(cfg), f, g, direct, cfg.lfo_iters, cfg.weights.tau)
    path = write_metrics_csv(Path(args.out) / "metrics.csv", rows)
    print(path.read_text(), end="")


def cmd_lfo(args):
    cfg = _cfg(args)
    f = _load(args.ckpt_projector, "projector")
    g = _load(args.ckpt_restorer, "restorer")
    x = load_png(args.input)[None]
    tr = lfo_restore(x, f, g, _features(args, cfg), args.iters)
    if args.dump_trace:
        tr.dump(args.dump_trace, save_png)
    if args.out:
        save_png(args.out, tr.final_hq.data[0])
    print(f"LFO x{args.iters}: {len(tr.conditions)} conditions")


def cmd_ablate_blur(args):
    cfg = _cfg(args)
    d = Path(args.ckpt_dir)
    g = _load(d / "restorer.ckpt", "restorer")
    prior = _load(d / "prior.ckpt", "prior")
    train, _, pairs = ex.corpora(cfg)
    rows = ex.ablate_lambda_blur(cfg, g, prior, train, pairs, steps=args.steps, out_dir=args.out)
    for r in rows:
        print(f"lambda_blur={r.lambda_blur:g} psnr={r.psnr:.4f} perc_proxy={r.perc_proxy:.6f}")


def cmd_plug_and_play(args):
    cfg = _cfg(args)
    f = _load(args.ckpt_projector, "projector")
    features = feature_extractor(cfg)
    train, _, pairs = ex.corpora(cfg)
    if args.ckpt_alt_restorer:
        g_alt = _load(args.ckpt_alt_restorer, "alternative restorer")
    else:
        g_alt, _ = ex.train_alt_restorer(cfg, train, features)
    rep = ex.plug_and_play_eval(f, g_alt, pairs, features, cfg.lq_preset,
                                args.alt_preset or cfg.lq_preset)
    out = Path(args.out)
    write_metrics_csv(out / "plug_and_play.csv", rep.rows)
    write_json(out / "plug_and_play_warnings.json", rep.warnings)
    for w in rep.warnings:
        print("warning:", w, file=sys.stderr)
    print((out / "plug_and_play.csv").read_text(), end="")


def cmd_report(args):
    cfg = _cfg(args)
    rep = ex.run_comparison(cfg, out_dir=args.out)
    print(json.dumps(rep.header, sort_keys=True))
    print((Path(args.out) / "metrics.csv").read_text(), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irib", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", default=None, help="experiment config JSON (defaults if omitted)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("synth", cmd_synth, "write a procedural HQ corpus as PNGs")
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--size", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)

    sp = add("degrade", cmd_degrade, "degrade PNGs with a preset (or replay a manifest)")
    sp.add_argument("--in", dest="input", required=True, help="PNG file or directory")
    sp.add_argument("--preset", default="lq")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--manifest", default=None, help="replay this manifest JSON instead of sampling")
    sp.add_argument("--out", required=True)

    sp = add("train-restorer", cmd_train_restorer, "stage 1: train the restorer g")
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--with-prior", action="store_true", help="also train the HQ prior")
    sp.add_argument("--out", required=True)

    for name, fn, help in (("train-projector", cmd_train_projector, "stage 2: train the projector"),
                           ("train-direct", cmd_train_direct, "train the direct ELQ->HQ baseline")):
        sp = add(name, fn, help)
        sp.add_argument("--ckpt-restorer", required=True)
        sp.add_argument("--ckpt-prior", default=None, help="trained here and saved when omitted")
        sp.add_argument("--steps", type=int, default=None)
        sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "evaluate checkpoints on the config's test pairs")
    sp.add_argument("--ckpt-dir", required=True)
    sp.add_argument("--out", required=True)

    sp = add("lfo", cmd_lfo, "restore one image with look-forward-once refinement")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--iters", type=int, default=1)
    sp.add_argument("--ckpt-projector", required=True)
    sp.add_argument("--ckpt-restorer", required=True)
    sp.add_argument("--ckpt-features", default=None)
    sp.add_argument("--dump-trace", default=None)
    sp.add_argument("--out", default=None, help="restored PNG path")

    sp = add("ablate-blur", cmd_ablate_blur, "lambda_blur sweep with an SVG trade-off plot")
    sp.add_argument("--ckpt-dir", required=True, help="directory with restorer.ckpt and prior.ckpt")
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--out", required=True)

    sp = add("plug-and-play", cmd_plug_and_play, "score a projector in front of another restorer")
    sp.add_argument("--ckpt-projector", required=True)
    sp.add_argument("--ckpt-alt-restorer", default=None, help="trained here when omitted")
    sp.add_argument("--alt-preset", default=None, help="LQ preset the alternative restorer was trained on")
    sp.add_argument("--out", required=True)

    sp = add("report", cmd_report, "full pipeline: train both arms, evaluate, write the run directory")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
