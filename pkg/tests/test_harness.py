import csv
import io
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy import linalg

from irib.cli import main as cli_main
from irib.degrade import DegradationManifest, IDENTITY_PRESET, apply_manifest
from irib.harness import experiments as ex
from irib.harness.config import ExperimentConfig, OptimizerConfig, StepsConfig, load_config
from irib.harness.data import derive_seed, make_pairs
from irib.harness.io import load_png, save_png, to_uint8
from irib.harness.metrics import (
    MetricsRow,
    compute_row,
    fid_proxy,
    frechet_distance,
    metrics_csv,
    perceptual_proxy,
    psnr,
    read_metrics_csv,
    ssim,
    write_metrics_csv,
)
from irib.harness.synth import gradient_energy, synth_dataset
from irib.harness.train import (
    TrainingDiverged,
    feature_extractor,
    train_prior,
    train_projector,
    train_restorer,
)
from irib.losses import read_jsonl
from irib.models import FeatureExtractor, Projector, Restorer, load_checkpoint


def tiny_config(**kw):
    base = dict(run_seed=3, image_size=32, n_train=6, n_test=4, width=4, blocks=1,
                alt_restorer_width=3, prior_width=4, prior_blocks=1,
                steps=StepsConfig(restorer=2, prior=2, projector=2, direct=2),
                optimizer=OptimizerConfig(learning_rate=1e-3, batch=2))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def features():
    return FeatureExtractor(1234)


@pytest.fixture(scope="module")
def corpus():
    return synth_dataset(200, 32, 0)


# ------------------------------------------------------------------ synthesis


def test_synth_is_deterministic():
    np.testing.assert_array_equal(synth_dataset(5, 24, 9), synth_dataset(5, 24, 9))
    assert not np.array_equal(synth_dataset(2, 24, 9), synth_dataset(2, 24, 10))


def test_synth_items_depend_only_on_index():
    np.testing.assert_array_equal(synth_dataset(6, 16, 4)[:3], synth_dataset(3, 16, 4))


def test_synth_range_and_shape(corpus):
    assert corpus.shape == (200, 3, 32, 32)
    assert corpus.min() >= 0.0 and corpus.max() <= 1.0


def test_synth_histogram_spans_unit_interval(corpus):
    hist, _ = np.histogram(corpus, bins=100, range=(0, 1))
    assert (hist > 0).mean() >= 0.8


def test_synth_gradient_energy_far_above_constant(corpus):
    const = np.full((3, 32, 32), 0.5)
    energies = [gradient_energy(im) for im in corpus]
    assert gradient_energy(const) == 0.0
    assert np.mean(energies) >= 10 * max(gradient_energy(const), 1e-4)


def test_synth_rejects_empty():
    with pytest.raises(ValueError):
        synth_dataset(0, 32, 0)


# ---------------------------------------------------------------------- pairs


def test_identity_presets_give_identical_images():
    hq = synth_dataset(4, 16, 1)
    p = make_pairs(hq, IDENTITY_PRESET, IDENTITY_PRESET, 5)
    np.testing.assert_array_equal(p.x_elq, hq)
    np.testing.assert_array_equal(p.x_lq, hq)


def test_elq_more_severe_than_lq(corpus):
    cfg = ExperimentConfig(image_size=32)
    p = make_pairs(corpus, cfg.lq, cfg.elq, 11)
    worse = psnr(p.x_elq, p.z_hq) < psnr(p.x_lq, p.z_hq)
    assert worse.mean() >= 0.95


def test_pairs_replay_bit_exact():
    hq = synth_dataset(6, 32, 2)
    cfg = ExperimentConfig()
    p = make_pairs(hq, cfg.lq, cfg.elq, 4)
    r = p.replay()
    np.testing.assert_array_equal(p.x_elq, r.x_elq)
    np.testing.assert_array_equal(p.x_lq, r.x_lq)


def test_derive_seed_is_pure_and_separates_streams():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    seeds = {derive_seed(0, tag, i) for tag in (1, 2, 3) for i in range(50)}
    assert len(seeds) == 150
    assert all(0 <= s < 2 ** 63 for s in seeds)


# -------------------------------------------------------------------- metrics


def test_psnr_formula():
    rng = np.random.default_rng(0)
    a = rng.uniform(size=(2, 3, 8, 8))
    b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
    mse = ((a - b) ** 2).reshape(2, -1).mean(axis=1)
    np.testing.assert_allclose(psnr(a, b), 10 * np.log10(1 / mse), rtol=1e-14)


def test_self_comparison(corpus, features):
    x = corpus[:8]
    row = compute_row("hq", 0, x, x, features)
    assert row.psnr == 99.0
    assert row.ssim == pytest.approx(1.0, abs=1e-12)
    assert row.blur_mse == 0.0 and row.perc_proxy == 0.0
    assert abs(row.fid_proxy) <= 1e-8


def test_ssim_matches_skimage():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(5)
    a = rng.uniform(size=(3, 24, 24))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    ref = skm.structural_similarity(a, b, channel_axis=0, data_range=1.0, gaussian_weights=True,
                                    sigma=1.5, use_sample_covariance=False)
    # skimage averages over the full image after cropping the window radius; same valid region
    assert ssim(a, b)[0] == pytest.approx(ref, abs=1e-10)


def test_frechet_matches_sqrtm_oracle():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    s1, s2 = a @ a.T + 0.1 * np.eye(6), b @ b.T + 0.1 * np.eye(6)
    mu1, mu2 = rng.normal(size=6), rng.normal(size=6)
    ref = ((mu1 - mu2) ** 2).sum() + np.trace(s1 + s2 - 2 * linalg.sqrtm(s1 @ s2).real)
    assert frechet_distance(mu1, s1, mu2, s2) == pytest.approx(ref, rel=1e-9)


def test_fid_separates_domains(corpus, features):
    cfg = ExperimentConfig(image_size=32)
    hq = corpus[:128]
    elq = make_pairs(hq, cfg.lq, cfg.elq, 1).x_elq
    within = fid_proxy(hq[:64], hq[64:], features)
    across = fid_proxy(hq, elq, features)
    assert within < across


def test_perceptual_proxy_zero_only_at_equality(corpus, features):
    x = corpus[:4]
    assert np.all(perceptual_proxy(x, x, features) == 0)
    assert np.all(perceptual_proxy(x, 1 - x, features) > 0)


def test_metrics_csv_rfc4180(tmp_path):
    rows = [MetricsRow("direct", 0, 20.5, 0.7, 1e-3, 0.25, 3.0),
            MetricsRow('a,"b"', 2, 99.0, 1.0, 0.0, 0.0, 0.0)]
    text = metrics_csv(rows)
    assert text.startswith("method,lfo,psnr,ssim,blur_mse,perc_proxy,fid_proxy\r\n")
    assert text.count("\r\n") == 3
    parsed = list(csv.reader(io.StringIO(text, newline="")))
    assert parsed[2][0] == 'a,"b"'
    path = write_metrics_csv(tmp_path / "m.csv", rows)
    assert path.read_bytes() == text.encode()
    assert read_metrics_csv(path) == rows


# --------------------------------------------------------------------- config


def test_config_round_trip(tmp_path):
    cfg = tiny_config(lfo_iters=(0, 2), prompt_dropout_p=0.25, student_lr=0.01,
                      restorer_optimizer=OptimizerConfig(learning_rate=0.003, batch=8, kind="adam"))
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert cfg.stage1_optimizer.batch == 8 and tiny_config().stage1_optimizer == tiny_config().optimizer
    path = cfg.save(tmp_path / "c.json")
    assert load_config(path, env={}) == cfg
    assert ExperimentConfig.from_json(ExperimentConfig().to_json()) == ExperimentConfig()


def test_seed_env_override(tmp_path):
    path = tiny_config().save(tmp_path / "c.json")
    assert load_config(path, env={"IRIB_SEED": "77"}).run_seed == 77
    assert load_config(None, env={}).run_seed == 0


@pytest.mark.parametrize("bad", [{"nope": 1}, {"image_size": 24}, {"lq_preset": "xx"}, {"prompt_dropout_p": 1.5},
                                 {"lfo_iters": [-1]}, {"optimizer": {"kind": "rmsprop"}}])
def test_config_rejects(bad):
    with pytest.raises((ValueError, TypeError)):
        ExperimentConfig.from_dict({**ExperimentConfig().to_dict(), **bad})


# ------------------------------------------------------------------------- io


def test_png_round_half_even(tmp_path):
    vals = np.array([0.0, 2.5, 3.5, 254.5, 255.0]) / 255.0
    img = np.broadcast_to(vals[None, None, :], (3, 1, 5))
    np.testing.assert_array_equal(to_uint8(img)[0, :, 0], [0, 2, 4, 254, 255])
    save_png(tmp_path / "x.png", img)
    np.testing.assert_array_equal(np.round(load_png(tmp_path / "x.png") * 255), to_uint8(img).transpose(2, 0, 1))


def test_png_round_trip_exact_on_grid(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(3, 9, 7)) / 255.0
    save_png(tmp_path / "y.png", img)
    np.testing.assert_array_equal(load_png(tmp_path / "y.png"), img)


# ------------------------------------------------------------------- training


def test_restorer_loss_decreases_on_small_corpus():
    cfg = ExperimentConfig(image_size=32, n_train=10, optimizer=OptimizerConfig(learning_rate=2e-3, kind="adam"))
    hq = synth_dataset(10, 32, 0)
    _, hist = train_restorer(hq, cfg, steps=100)
    ma = hist.moving_average(50)
    assert len(ma) == 51
    assert ma[-1] < ma[0]


def test_zero_step_restorer_is_identity(features):
    cfg = tiny_config()
    train, _, pairs = ex.corpora(cfg)
    g, hist = train_restorer(train, cfg, steps=0, features=features)
    assert hist.steps == 0
    np.testing.assert_allclose(ex.restorer_gain(g, pairs, features), 0.0, atol=1e-9)


def test_projector_training_leaves_frozen_models_untouched(features):
    cfg = tiny_config()
    train, _, _ = ex.corpora(cfg)
    g, _ = train_restorer(train, cfg, features=features)
    prior, _ = train_prior(train, cfg)
    before = (g.state_dict(), prior.state_dict())
    f, hist = train_projector(train, cfg, g, prior, steps=3, features=features)
    for old, new in zip(before, (g.state_dict(), prior.state_dict())):
        assert old.keys() == new.keys()
        for k in old:
            np.testing.assert_array_equal(old[k], new[k])
    assert hist.steps == 3 and len(hist.reports) == 3
    assert any(not np.array_equal(p.data, q.data) for p, q in
               zip(f.parameters(), Projector(width=cfg.width, blocks=cfg.blocks).parameters()))


def test_dropout_only_touches_conditions(features):
    cfg = tiny_config()
    train, _, _ = ex.corpora(cfg)
    g, _ = train_restorer(train, cfg, features=features)
    prior, _ = train_prior(train, cfg)
    runs = {}
    for p in (0.0, 1e-12, 1.0):
        _, hist = train_projector(train, cfg.replace(prompt_dropout_p=p), g, prior, steps=3,
                                  features=features)
        runs[p] = hist.losses
    assert runs[0.0] == runs[1e-12]
    assert runs[0.0] != runs[1.0]


def test_projector_loss_decreases():
    cfg = ExperimentConfig(image_size=32, n_train=10, width=8, blocks=2, prior_width=8, prior_blocks=2,
                           optimizer=OptimizerConfig(learning_rate=2e-3, kind="adam"))
    features = feature_extractor(cfg)
    hq = synth_dataset(10, 32, 0)
    g, _ = train_restorer(hq, cfg, steps=60, features=features)
    prior, _ = train_prior(hq, cfg, steps=60)
    _, hist = train_projector(hq, cfg, g, prior, steps=120, features=features)
    ma = hist.moving_average(40)
    assert ma[-1] < ma[0]


def test_nan_aborts_with_last_good():
    cfg = tiny_config()
    hq = synth_dataset(4, 32, 0)
    hq[1, 0, 3, 3] = np.nan
    with pytest.raises(TrainingDiverged) as info:
        train_restorer(hq, cfg.replace(optimizer=OptimizerConfig(batch=4)), steps=2)
    assert info.value.last_good is not None


# ---------------------------------------------------------------- experiments


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    cfg = tiny_config()
    out = tmp_path_factory.mktemp("run")
    return cfg, out, ex.run_comparison(cfg, out_dir=out)


def test_comparison_rows_and_header(tiny_run):
    cfg, out, rep = tiny_run
    assert [(r.method, r.lfo) for r in rep.rows] == [("direct", 0), ("decomposed", 0),
                                                      ("decomposed", 1), ("decomposed", 2)]
    h = rep.header
    assert h["projector_steps"] == h["direct_steps"] == cfg.steps.projector
    assert abs(h["projector_params"] - h["direct_params"]) <= 0.05 * h["projector_params"]
    assert json.loads((out / "run_header.json").read_text()) == h


def test_run_directory_layout(tiny_run):
    cfg, out, rep = tiny_run
    for sub in ("checkpoints", "images/elq", "images/lq", "images/hq", "images/restored", "manifests"):
        assert (out / sub).is_dir()
    assert read_metrics_csv(out / "metrics.csv") == rep.rows
    assert ExperimentConfig.from_json((out / "config.json").read_text()) == cfg
    assert len(read_jsonl(out / "losses.jsonl")) == cfg.steps.projector
    for name in ("restorer", "prior", "projector", "direct", "features"):
        load_checkpoint(out / "checkpoints" / f"{name}.ckpt")


def test_images_regenerable_from_snapshot(tiny_run):
    _, out, _ = tiny_run
    cfg = ExperimentConfig.from_json((out / "config.json").read_text())
    _, test_hq, _ = ex.corpora(cfg)
    rng = np.random.default_rng(0)
    for i in rng.choice(cfg.n_test, size=min(5, cfg.n_test), replace=False):
        for kind in ("lq", "elq"):
            m = DegradationManifest.from_json((out / "manifests" / f"{kind}_{i:04d}.json").read_text())
            regen = to_uint8(apply_manifest(m, test_hq[i:i + 1]).data[0])
            stored = np.round(load_png(out / "images" / kind / f"{i:04d}.png") * 255).astype(np.uint8)
            np.testing.assert_array_equal(stored.transpose(1, 2, 0), regen)
        hq = np.round(load_png(out / "images" / "hq" / f"{i:04d}.png") * 255)
        np.testing.assert_array_equal(hq.transpose(1, 2, 0), to_uint8(test_hq[i]))


def test_pipeline_metrics_deterministic(tiny_run, tmp_path):
    cfg, out, _ = tiny_run
    ex.run_comparison(cfg, out_dir=tmp_path)
    assert (tmp_path / "metrics.csv").read_bytes() == (out / "metrics.csv").read_bytes()


def test_evaluate_needs_models(tiny_run):
    _, _, rep = tiny_run
    with pytest.raises(ValueError):
        ex.evaluate(rep.pipeline.test_pairs, rep.pipeline.features)


def test_plug_and_play_with_same_restorer_matches_decomposed(tiny_run):
    cfg, _, rep = tiny_run
    p = rep.pipeline
    pp = ex.plug_and_play_eval(p.projector, p.restorer, p.test_pairs, p.features, "lq", "lq")
    assert len(pp.rows) == 2 and pp.warnings == []
    chained = pp.rows[1]
    ref = rep.row("decomposed", 0)
    assert (chained.psnr, chained.ssim, chained.blur_mse, chained.perc_proxy, chained.fid_proxy) == \
        (ref.psnr, ref.ssim, ref.blur_mse, ref.perc_proxy, ref.fid_proxy)


def test_plug_and_play_warns_on_preset_mismatch(tiny_run):
    _, _, rep = tiny_run
    p = rep.pipeline
    pp = ex.plug_and_play_eval(p.projector, p.restorer, p.test_pairs, p.features, "lq", "elq")
    assert len(pp.warnings) == 1 and "mismatch" in pp.warnings[0]


def test_ablation_rows_and_svg(tiny_run, tmp_path):
    cfg, _, rep = tiny_run
    p = rep.pipeline
    rows = ex.ablate_lambda_blur(cfg, p.restorer, p.prior, p.train_hq, p.test_pairs, p.features,
                                 steps=1, out_dir=tmp_path)
    assert [r.lambda_blur for r in rows] == [0.0, 0.5, 1.0, 2.0]
    root = ET.fromstring((tmp_path / "ablation.svg").read_text())
    assert root.tag.endswith("svg")
    assert len([e for e in root.iter() if e.tag.endswith("circle")]) == 4


def test_condition_alignment_has_one_value_per_condition(tiny_run):
    _, _, rep = tiny_run
    p = rep.pipeline
    a = ex.mean_condition_alignment(p.test_pairs, p.projector, p.restorer, p.features, 2)
    assert a.shape == (3,) and np.all(np.abs(a) <= 1)


# ------------------------------------------------------------------------ CLI


def test_cli_end_to_end(tmp_path, capsys):
    cfg_path = str(tiny_config().save(tmp_path / "cfg.json"))
    ck = tmp_path / "ck"
    assert cli_main(["synth", "--config", cfg_path, "--n", "2", "--out", str(tmp_path / "hq")]) == 0
    assert len(list((tmp_path / "hq").glob("*.png"))) == 2
    assert cli_main(["degrade", "--in", str(tmp_path / "hq"), "--preset", "elq", "--seed", "1",
                     "--out", str(tmp_path / "elq")]) == 0
    m = DegradationManifest.from_json((tmp_path / "elq" / "0000.manifest.json").read_text())
    assert m.preset_id == "ELQ"
    assert cli_main(["degrade", "--in", str(tmp_path / "hq" / "0000.png"), "--manifest",
                     str(tmp_path / "elq" / "0000.manifest.json"), "--out", str(tmp_path / "replay")]) == 0
    assert (tmp_path / "replay" / "0000.png").read_bytes() == (tmp_path / "elq" / "0000.png").read_bytes()
    assert cli_main(["train-restorer", "--config", cfg_path, "--with-prior", "--out", str(ck)]) == 0
    assert cli_main(["train-projector", "--config", cfg_path, "--ckpt-restorer", str(ck / "restorer.ckpt"),
                     "--ckpt-prior", str(ck / "prior.ckpt"), "--out", str(ck)]) == 0
    assert cli_main(["train-direct", "--config", cfg_path, "--ckpt-restorer", str(ck / "restorer.ckpt"),
                     "--ckpt-prior", str(ck / "prior.ckpt"), "--out", str(ck)]) == 0
    assert cli_main(["eval", "--config", cfg_path, "--ckpt-dir", str(ck), "--out", str(tmp_path / "ev")]) == 0
    assert len(read_metrics_csv(tmp_path / "ev" / "metrics.csv")) == 4
    assert cli_main(["lfo", "--config", cfg_path, "--in", str(tmp_path / "elq" / "0000.png"), "--iters", "2",
                     "--ckpt-projector", str(ck / "projector.ckpt"), "--ckpt-restorer",
                     str(ck / "restorer.ckpt"), "--dump-trace", str(tmp_path / "trace")]) == 0
    assert (tmp_path / "trace" / "condition_3.json").exists()
    assert cli_main(["plug-and-play", "--config", cfg_path, "--ckpt-projector", str(ck / "projector.ckpt"),
                     "--ckpt-alt-restorer", str(ck / "restorer.ckpt"), "--out", str(tmp_path / "pp")]) == 0
    assert len(read_metrics_csv(tmp_path / "pp" / "plug_and_play.csv")) == 2
    out = capsys.readouterr().out
    assert "restorer:" in out and "LFO x2" in out


def test_cli_missing_checkpoint(tmp_path):
    with pytest.raises(SystemExit):
        cli_main(["eval", "--ckpt-dir", str(tmp_path), "--out", str(tmp_path / "o")])
