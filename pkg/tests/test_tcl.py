import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_rgb_match
from vfi.autograd import Tensor, backward, mean_abs_diff, weighted_sum
from vfi.errors import ConfigError, ShapeError
from vfi.tcl import TclConfig, combined_objective, l1_loss, tcl_loss


def rgb(rng, h=12, w=12):
    return rng.random((3, h, w))


def test_defaults():
    cfg = TclConfig()
    assert (cfg.alpha, cfg.k, cfg.d, cfg.matching_space) == (0.1, 3, 3, "census")


@pytest.mark.parametrize("kw", [{"alpha": -0.1}, {"k": 4}, {"k": 0}, {"d": 0}, {"matching_space": "lab"}])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        TclConfig(**kw)


# ---------------------------------------------------------------- l1


def test_l1_identical_and_offset(rng):
    a = rgb(rng)
    assert l1_loss(Tensor(a), a).item() == 0.0
    assert l1_loss(Tensor(a + 0.5), a).item() == pytest.approx(0.5, abs=1e-15)


def test_l1_matches_elementwise_oracle(rng):
    a, b = rgb(rng), rgb(rng)
    want = sum(abs(u - v) for u, v in zip(a.ravel(), b.ravel())) / a.size
    assert l1_loss(Tensor(a), b).item() == pytest.approx(want, rel=1e-13)


def test_l1_shape_error(rng):
    with pytest.raises(ShapeError):
        l1_loss(Tensor(rgb(rng)), rgb(rng, 12, 11))


# ---------------------------------------------------------------- tcl


@pytest.mark.parametrize("which", [0, 1])
@pytest.mark.parametrize("space", ["census", "rgb"])
def test_prediction_equal_to_input_is_zero(rng, which, space):
    frames = [rgb(rng), rgb(rng)]
    term = tcl_loss(Tensor(frames[which]), frames, TclConfig(matching_space=space))
    assert term.loss.item() == 0.0


def test_translated_texture_zero_on_interior(rng):
    tex = rng.random((3, 30, 30))
    first = tex[:, 5:25, 5:25]
    last = tex[:, 5:25, 7:27]
    pred = tex[:, 5:25, 6:26]  # last shifted back by one pixel
    term = tcl_loss(Tensor(pred), [rng.random(first.shape), last], TclConfig(d=2))
    inner = np.abs(pred - term.pseudo_label)[:, 2:-2, 2:-2]
    assert np.all(inner == 0.0)


def test_rgb_matching_reproduces_oracle(rng):
    pred, f0, f1 = rgb(rng, 9, 8), rgb(rng, 9, 8), rgb(rng, 9, 8)
    term = tcl_loss(Tensor(pred), [f0, f1], TclConfig(d=2, k=3, matching_space="rgb"))
    np.testing.assert_array_equal(term.pseudo_label, brute_force_rgb_match(pred, [f0, f1], 2, 3))


def test_pseudo_label_pixels_come_from_inputs(rng):
    frames = [rgb(rng), rgb(rng)]
    term = tcl_loss(Tensor(rgb(rng)), frames)
    m = term.matches
    for y in range(12):
        for x in range(12):
            src = frames[0] if m.frame[y, x] == -1 else frames[1]
            np.testing.assert_array_equal(term.pseudo_label[:, y, x], src[:, m.pos_y[y, x], m.pos_x[y, x]])


def test_tcl_shape_error(rng):
    with pytest.raises(ShapeError):
        tcl_loss(Tensor(rgb(rng)), [rgb(rng), rgb(rng, 12, 10)])


# ---------------------------------------------------------------- combined objective


def test_alpha_zero_is_l1(rng):
    pred, gt = rgb(rng), rgb(rng)
    rep = combined_objective(Tensor(pred), gt, [rgb(rng), rgb(rng)], TclConfig(alpha=0.0))
    assert abs(rep.total - l1_loss(Tensor(pred), gt).item()) <= 1e-12


def test_static_scene_total_zero(rng):
    a = rgb(rng)
    assert combined_objective(Tensor(a), a, [a, a]).total == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), alpha=st.floats(0, 3))
def test_total_is_l1_plus_alpha_tcl(seed, alpha):
    rng = np.random.default_rng(seed)
    rep = combined_objective(Tensor(rgb(rng, 8, 8)), rgb(rng, 8, 8), [rgb(rng, 8, 8), rgb(rng, 8, 8)], TclConfig(alpha=alpha))
    assert rep.total == pytest.approx(rep.l1_term + alpha * rep.tcl_term, abs=1e-14)
    assert rep.tcl_term >= 0


def test_affine_increasing_in_alpha(rng):
    pred, gt, f0, f1 = (rgb(rng, 8, 8) for _ in range(4))
    totals = [combined_objective(Tensor(pred), gt, [f0, f1], TclConfig(alpha=a)).total for a in (0.0, 0.5, 1.0, 2.0)]
    slopes = np.diff(totals) / np.diff([0.0, 0.5, 1.0, 2.0])
    assert np.allclose(slopes, slopes[0], atol=1e-13)
    assert slopes[0] >= 0


def test_gradient_matches_frozen_finite_differences(rng):
    pred = Tensor(rgb(rng, 10, 10), requires_grad=True)
    gt, f0, f1 = rgb(rng, 10, 10), rgb(rng, 10, 10), rgb(rng, 10, 10)
    cfg = TclConfig(alpha=0.7)
    rep = combined_objective(pred, gt, [f0, f1], cfg)
    backward(rep.loss)
    label = rep.pseudo_label

    def frozen(v):
        p = Tensor(v)
        return weighted_sum([(1.0, mean_abs_diff(p, gt)), (cfg.alpha, mean_abs_diff(p, label))]).item()

    h = 1e-6
    worst = 0.0
    for _ in range(25):
        idx = tuple(int(rng.integers(s)) for s in pred.shape)
        up, dn = pred.data.copy(), pred.data.copy()
        up[idx] += h
        dn[idx] -= h
        num = (frozen(up) - frozen(dn)) / (2 * h)
        ana = pred.grad[idx]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-7))
    assert worst <= 1e-4
