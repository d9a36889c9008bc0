import json

import numpy as np
import pytest

from irib.harness.io import save_png
from irib.lfo import LfoTrace, condition_alignment, lfo_restore
from irib.models import Condition, FeatureExtractor, Projector, Restorer, extract_condition
from irib.numerics import Tensor


def perturbed(net, scale=0.05, seed=9):
    rng = np.random.default_rng(seed)
    for p in net.parameters():
        p.data = p.data + scale * rng.normal(size=p.shape)
    return net.freeze()


@pytest.fixture(scope="module")
def setup():
    Y = FeatureExtractor(5)
    f = perturbed(Projector(width=8, blocks=2, seed=1), seed=2)
    g = perturbed(Restorer(width=8, blocks=2, seed=3), seed=4)
    x = np.random.default_rng(0).uniform(size=(3, 3, 16, 16))
    return x, f, g, Y


class Recorder:
    """Wraps a network and logs the image and condition of every call."""

    def __init__(self, net):
        self.net, self.calls = net, []

    def __call__(self, x, c):
        self.calls.append((np.array(x.data), c))
        return self.net(x, c)


def test_zero_iterations_is_plain_chain(setup):
    x, f, g, Y = setup
    tr = lfo_restore(x, f, g, Y, 0)
    c1 = extract_condition(x, Y)
    lq = f(Tensor(x), c1)
    hq = g(lq, extract_condition(lq, Y))
    assert tr.conditions[0] == c1
    np.testing.assert_array_equal(tr.lq_proxies[0].data, lq.data)
    np.testing.assert_array_equal(tr.final_hq.data, hq.data)


@pytest.mark.parametrize("n", range(5))
def test_trace_lengths(setup, n):
    x, f, g, Y = setup
    tr = lfo_restore(x, f, g, Y, n)
    assert len(tr.conditions) == n + 1
    assert len(tr.lq_proxies) == n + 1
    assert tr.iterations == n
    assert tr.final_hq.shape == x.shape


def test_projector_always_sees_original_input(setup):
    x, f, g, Y = setup
    rf = Recorder(f)
    tr = lfo_restore(x, rf, g, Y, 3)
    assert len(rf.calls) == 4
    for i, (seen, cond) in enumerate(rf.calls):
        np.testing.assert_array_equal(seen, x)
        assert cond == tr.conditions[i]
        np.testing.assert_array_equal(f(Tensor(x), cond).data, tr.lq_proxies[i].data)


def test_conditions_rederived_from_previous_proxy(setup):
    x, f, g, Y = setup
    tr = lfo_restore(x, f, g, Y, 2)
    for i in (1, 2):
        assert tr.conditions[i] == extract_condition(tr.lq_proxies[i - 1], Y)


def test_restorer_condition_comes_from_final_proxy(setup):
    x, f, g, Y = setup
    rg = Recorder(g)
    tr = lfo_restore(x, f, rg, Y, 2)
    assert len(rg.calls) == 1
    seen, cond = rg.calls[0]
    np.testing.assert_array_equal(seen, tr.lq_proxies[-1].data)
    assert cond == extract_condition(tr.lq_proxies[-1], Y)


def test_converged_condition_gives_identical_proxy(setup):
    # A projector that ignores its condition converges immediately.
    x, _, g, Y = setup

    def f_const(img, c):
        return Tensor(np.clip(img.data * 0.9 + 0.05, 0, 1))

    tr = lfo_restore(x, f_const, g, Y, 3)
    for i in range(1, 4):
        if tr.conditions[i] == tr.conditions[i - 1]:
            np.testing.assert_array_equal(tr.lq_proxies[i].data, tr.lq_proxies[i - 1].data)
    assert tr.conditions[2] == tr.conditions[1]


def test_deterministic(setup):
    x, f, g, Y = setup
    a, b = lfo_restore(x, f, g, Y, 2), lfo_restore(x, f, g, Y, 2)
    assert a.conditions == b.conditions
    np.testing.assert_array_equal(a.final_hq.data, b.final_hq.data)


@pytest.mark.parametrize("bad", [-1, 1.5, True, "2"])
def test_bad_iterations_rejected(setup, bad):
    x, f, g, Y = setup
    with pytest.raises((ValueError, TypeError)):
        lfo_restore(x, f, g, Y, bad)


def test_alignment_shape_and_range(setup):
    x, f, g, Y = setup
    tr = lfo_restore(x, f, g, Y, 2)
    a = condition_alignment(tr, x, Y)
    assert a.shape == (3, 3)
    assert np.all(np.abs(a) <= 1 + 1e-12)
    # The first condition is extracted from x itself, so it aligns perfectly with Y(x).
    np.testing.assert_allclose(a[0], 1.0, atol=1e-12)


def test_dump_writes_conditions_and_images(setup, tmp_path):
    x, f, g, Y = setup
    tr = lfo_restore(x[:1], f, g, Y, 1)
    tr.dump(tmp_path, save_png)
    c1 = json.loads((tmp_path / "condition_1.json").read_text())
    assert Condition.from_dict(c1) == tr.conditions[0]
    assert (tmp_path / "condition_2.json").exists()
    for name in ("lq_proxy_1_0.png", "lq_proxy_2_0.png", "final_0.png"):
        assert (tmp_path / name).stat().st_size > 0


def test_empty_trace_iterations():
    assert LfoTrace().iterations == -1
