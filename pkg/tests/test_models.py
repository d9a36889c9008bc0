import numpy as np
import pytest

from irib import numerics as nm
from irib.degrade import ELQ_PRESET, LQ_PRESET, apply_manifest, sample_manifest
from irib.harness.synth import synth_dataset
from irib.models import (
    CheckpointError,
    Condition,
    FeatureExtractor,
    NoiseSchedule,
    PriorScore,
    Projector,
    Restorer,
    condition_dropout,
    condition_tensor,
    cosine,
    denoising_loss,
    extract_condition,
    load_checkpoint,
    noising,
    projector_forward,
    read_checkpoint,
    restorer_forward,
    save_checkpoint,
    to_latent,
)
from irib.numerics import ShapeError, Tensor


def img(seed=0, shape=(2, 3, 12, 12)):
    return Tensor(np.random.default_rng(seed).uniform(size=shape))


def perturbed(net, scale=0.05, seed=9):
    """Nudge every parameter so no branch is exactly zero."""
    rng = np.random.default_rng(seed)
    for p in net.parameters():
        p.data = p.data + scale * rng.normal(size=p.shape)
    return net


@pytest.fixture(scope="module")
def features():
    return FeatureExtractor(7)


# ---------------------------------------------------------------- networks


def test_fresh_projector_is_identity(features):
    x = img(1)
    c = extract_condition(x, features)
    np.testing.assert_allclose(projector_forward(Projector(seed=3), x, c).data, x.data, atol=1e-6)


def test_fresh_restorer_is_identity():
    x = img(2)
    out = restorer_forward(Restorer(seed=4), x, Condition.null_condition(2))
    np.testing.assert_allclose(out.data, x.data, atol=1e-6)


def test_null_condition_equals_zero_vector():
    f = perturbed(Projector(seed=5))
    x = img(3)
    a = f(x, Condition.null_condition(2)).data
    b = f(x, Tensor(np.zeros((2, 16)))).data
    np.testing.assert_array_equal(a, b)


def test_output_stays_in_unit_range():
    f = perturbed(Projector(seed=6), scale=0.5)
    out = f(img(4), Condition.of(np.random.default_rng(0).normal(size=(2, 16)))).data
    assert out.shape == (2, 3, 12, 12)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_condition_dim_mismatch_is_rejected():
    with pytest.raises(ShapeError):
        Projector(seed=0)(img(), Tensor(np.zeros((2, 8))))
    with pytest.raises(ShapeError):
        Projector(seed=0)(Tensor(np.zeros((2, 1, 8, 8))), Tensor(np.zeros((2, 16))))


def test_projector_gradient_matches_finite_differences():
    f = perturbed(Projector(width=4, blocks=2, seed=7))
    x = Tensor(np.random.default_rng(8).uniform(0.3, 0.7, size=(1, 3, 6, 6)))
    c = Condition.of(np.random.default_rng(9).normal(size=(1, 16)))
    err = nm.finite_diff_check(lambda: f(x, c).mean(), f.parameters(), sample_count=32)
    assert err <= 1e-4


def test_frozen_network_records_no_gradients():
    g = perturbed(Restorer(width=4, blocks=1, seed=1)).freeze()
    f = perturbed(Projector(width=4, blocks=1, seed=2))
    x = img(5, (1, 3, 8, 8))
    c = Condition.null_condition(1)
    loss = g(f(x, c), c).mean()
    nm.backward(loss, f.parameters())
    assert sum(np.abs(p.grad).sum() for p in g.parameters()) == 0.0
    assert sum(np.abs(p.grad).sum() for p in f.parameters()) > 0.0


def test_condition_modulation_is_lipschitz_in_c():
    f = perturbed(Projector(seed=11), scale=0.1)
    x = img(6, (1, 3, 12, 12))
    rng = np.random.default_rng(12)
    c0 = rng.normal(size=(1, 16))
    ratios = []
    for _ in range(10):
        dc = rng.normal(size=(1, 16)) * 1e-3
        delta = f(x, Condition.of(c0 + dc)).data - f(x, Condition.of(c0)).data
        ratios.append(np.linalg.norm(delta) / np.linalg.norm(dc))
    # Recorded bound: the same network with a perturbation 100x larger stays within 10x.
    big = rng.normal(size=(1, 16)) * 1e-1
    jump = np.linalg.norm(f(x, Condition.of(c0 + big)).data - f(x, Condition.of(c0)).data)
    assert jump <= 10 * max(ratios) * np.linalg.norm(big)


def test_parameter_counts_match_for_equal_width():
    assert Projector(seed=0).n_params() == Restorer(seed=1).n_params()
    assert Restorer(width=12).n_params() < Restorer(width=16).n_params()


# ---------------------------------------------------------------- schedule and prior


def test_schedule_shape_and_monotonicity():
    s = NoiseSchedule()
    ab = s.alphas_bar
    assert len(ab) == 20 and ab[0] <= 1 and ab[-1] > 0
    assert np.all(np.diff(ab) < 0)
    assert ab[0] == pytest.approx(0.9999) and ab[-1] == pytest.approx(0.05)


def test_schedule_rejects_bad_ranges():
    with pytest.raises(ValueError):
        NoiseSchedule(T=5, start=1.2)
    with pytest.raises(ValueError):
        NoiseSchedule(T=5, start=0.5, end=0.0)


def test_noising_limits():
    z = img(7).data
    eps = np.random.default_rng(1).normal(size=z.shape)
    one = NoiseSchedule(T=2, start=1.0, end=0.5)
    np.testing.assert_array_equal(noising(z, 0, eps, one).data, z)
    tiny = NoiseSchedule(T=2, start=0.5, end=1e-300)
    np.testing.assert_allclose(noising(z, 1, eps, tiny).data, eps, atol=1e-12)


def test_noising_variance_monte_carlo():
    s = NoiseSchedule()
    rng = np.random.default_rng(3)
    for t in (0, 7, 19):
        eps = rng.standard_normal((10_000, 1))
        zt = noising(np.zeros((10_000, 1)), t, eps, s).data
        assert zt.var() == pytest.approx(1 - s.alphas_bar[t], rel=0.03)


def test_noising_rejects_bad_input():
    s = NoiseSchedule()
    with pytest.raises(ValueError):
        noising(np.zeros((1, 2)), 20, np.zeros((1, 2)), s)
    with pytest.raises(ShapeError):
        noising(np.zeros((1, 2)), 0, np.zeros((1, 3)), s)


def test_prior_eps_shape_determinism_and_range_check():
    p = PriorScore(seed=0)
    z = to_latent(img(8))
    a, b = p.eps(z, 5).data, p.eps(z, 5).data
    assert a.shape == z.shape
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        p.eps(z, 20)
    with pytest.raises(ValueError):
        p.eps(z, -1)


def test_prior_training_reduces_noise_prediction_error():
    # One image, the low-noise end of the schedule: held-out error must fall.
    z = to_latent(synth_dataset(1, 16, seed=3))
    p = PriorScore(NoiseSchedule(), width=8, blocks=2, seed=1)
    probe = np.random.default_rng(99)
    t = np.array([1, 2, 3, 4])
    eps = probe.standard_normal((4,) + z.shape[1:])
    zz = Tensor(np.repeat(z.data, 4, axis=0))

    def error():
        with nm.no_grad():
            return float(((p.eps(noising(zz, t, eps, p.schedule), t).data - eps) ** 2).mean())

    before = error()
    opt = nm.SGD(p.parameters(), lr=0.05)
    rng = np.random.default_rng(0)
    for _ in range(150):
        nm.backward(denoising_loss(p, zz, rng), p.parameters())
        opt.step()
    assert error() < 0.5 * before


# ---------------------------------------------------------------- conditions


def test_condition_is_deterministic_and_unit_norm(features):
    x = img(9, (4, 3, 16, 16))
    a, b = extract_condition(x, features), extract_condition(x, features)
    assert a == b
    np.testing.assert_allclose(np.linalg.norm(a.vector, axis=1), 1.0, atol=1e-9)


def test_flat_image_gives_null_condition(features):
    c = extract_condition(np.full((1, 3, 16, 16), 0.4), features)
    assert c.is_null
    assert not c.vector.any()


def test_feature_extractor_is_seeded():
    a, b, c = FeatureExtractor(3), FeatureExtractor(3), FeatureExtractor(4)
    np.testing.assert_array_equal(a.w1, b.w1)
    assert not np.array_equal(a.w1, c.w1)
    np.testing.assert_allclose(a.w1.sum(axis=(1, 2, 3)), 0.0, atol=1e-12)


def test_condition_tracks_degradation_severity():
    features = FeatureExtractor(1234)
    hq = synth_dataset(200, 32, seed=0)
    mild = np.concatenate([apply_manifest(sample_manifest(LQ_PRESET, i), hq[i:i + 1]).data
                           for i in range(200)])
    severe = np.concatenate([apply_manifest(sample_manifest(ELQ_PRESET, 1000 + i), hq[i:i + 1]).data
                             for i in range(200)])
    c_hq = extract_condition(hq, features)
    near = cosine(c_hq, extract_condition(mild, features))
    far = cosine(c_hq, extract_condition(severe, features))
    assert (near > far).mean() >= 0.8


def test_condition_dropout_extremes():
    c = Condition.of(np.random.default_rng(0).normal(size=(50, 16)))
    assert condition_dropout(c, 0.0, 1) == c
    dropped = condition_dropout(c, 1.0, 1)
    assert dropped.is_null and not dropped.vector.any()


def test_condition_dropout_rate():
    c = Condition.of(np.ones((100_000, 2)))
    frac = condition_dropout(c, 0.3, 2024).null.mean()
    assert abs(frac - 0.3) <= 0.01


def test_condition_dropout_is_seeded():
    c = Condition.of(np.ones((64, 2)))
    assert condition_dropout(c, 0.5, 7) == condition_dropout(c, 0.5, 7)
    with pytest.raises(ValueError):
        condition_dropout(c, 1.5, 0)


def test_null_rows_are_zeroed_on_construction():
    c = Condition(np.ones((3, 4)), [False, True, False])
    np.testing.assert_array_equal(c.vector[1], 0.0)
    assert not c.is_null


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    f = perturbed(Projector(width=6, blocks=2, seed=4))
    path = save_checkpoint(tmp_path / "f.ckpt", f)
    g = load_checkpoint(path)
    assert isinstance(g, Projector) and g.arch() == f.arch()
    for k in f.params:
        np.testing.assert_array_equal(g.params[k].data, f.params[k].data)
    x, c = img(10), Condition.null_condition(2)
    np.testing.assert_array_equal(g(x, c).data, f(x, c).data)


def test_prior_checkpoint_round_trip(tmp_path):
    p = PriorScore(width=8, blocks=2, seed=3)
    q = load_checkpoint(save_checkpoint(tmp_path / "p.ckpt", p))
    assert q.schedule == p.schedule
    z = to_latent(img(11))
    np.testing.assert_array_equal(q.eps(z, 3).data, p.eps(z, 3).data)


def test_checkpoint_header_layout(tmp_path):
    path = save_checkpoint(tmp_path / "r.ckpt", Restorer(width=2, blocks=1))
    raw = path.read_bytes()
    assert raw[:8] == b"IRIBCKPT"
    assert int.from_bytes(raw[8:12], "little") == 1
    arch, state = read_checkpoint(path)
    assert arch["kind"] == "restorer" and "tail.w" in state


def test_corrupt_checkpoints_are_rejected(tmp_path):
    good = save_checkpoint(tmp_path / "r.ckpt", Restorer(width=2, blocks=1)).read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + good[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    bad.write_bytes(good[:-5])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_condition_tensor_matches_extracted_condition(features):
    x = img(12, (3, 3, 16, 16))
    x.data[1] = 0.5  # a flat image maps to the null row in both versions
    c = extract_condition(x, features)
    np.testing.assert_allclose(condition_tensor(x, features).data, c.vector, atol=1e-15)
    assert c.null.tolist() == [False, True, False]


def test_condition_tensor_gradient(features):
    x = img(13, (1, 3, 10, 10))
    x.requires_grad = True
    probe = np.random.default_rng(1).normal(size=(1, 16))
    err = nm.finite_diff_check(lambda: (condition_tensor(x, features) * probe).sum(), [x])
    assert err <= 1e-4
