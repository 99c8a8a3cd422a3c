import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfi.align import passthrough_conv
from vfi.autograd import Tensor
from vfi.errors import CheckpointError, ConfigError, ShapeError
from vfi.gradcheck import check_gradients, max_rel_error, project
from vfi.ops import ConvParams, ConvSpec, init_conv, init_res_block
from vfi.synthesis import (
    FusionParams,
    ModelConfig,
    ReconParams,
    attention_fuse,
    count_params,
    init_model,
    interpolate,
    load_checkpoint,
    named_parameters,
    read_checkpoint_header,
    reconstruct,
    save_checkpoint,
)


def rand(rng, *shape):
    return Tensor(rng.standard_normal(shape))


def tiny_config():
    return ModelConfig(channels=4, recon_blocks=1, extract_blocks=1, align_blocks=1)


# ---------------------------------------------------------------- fusion


def test_fuse_equal_inputs(rng):
    a = rand(rng, 4, 6, 6)
    out = attention_fuse(a, Tensor(a.data.copy()), FusionParams(init_conv(ConvSpec(8, 4), rng)))
    np.testing.assert_array_equal(out.data, a.data)


def test_fuse_saturates_to_first_input(rng):
    a, b = rand(rng, 4, 5, 5), rand(rng, 4, 5, 5)
    p = FusionParams(ConvParams(Tensor(np.zeros((4, 8, 3, 3))), Tensor(np.full(4, 1e3)), 1))
    np.testing.assert_allclose(attention_fuse(a, b, p).data, a.data, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), gain=st.floats(0.1, 20))
def test_fuse_is_convex(seed, gain):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 3, 6, 6)) * 4
    out = attention_fuse(Tensor(a), Tensor(b), FusionParams(init_conv(ConvSpec(6, 3), rng, gain=gain))).data
    assert np.all(out >= np.minimum(a, b) - 1e-12)
    assert np.all(out <= np.maximum(a, b) + 1e-12)


def test_fuse_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        attention_fuse(rand(rng, 4, 5, 5), rand(rng, 4, 5, 4), FusionParams(init_conv(ConvSpec(8, 4), rng)))


def test_fuse_gradients_fd(rng):
    a, b = rand(rng, 3, 5, 5), rand(rng, 3, 5, 5)
    p = FusionParams(init_conv(ConvSpec(6, 3), rng))
    d = rng.standard_normal((3, 5, 5))
    fn = lambda: project(attention_fuse(a, b, p), d)
    assert max_rel_error(check_gradients(fn, [a, b, p.conv.weight, p.conv.bias], probes=25, h=1e-6, rng=rng)) <= 1e-4


# ---------------------------------------------------------------- reconstruction


def test_reconstruct_gray_with_no_blocks(rng):
    out_conv = ConvParams(Tensor(np.zeros((3, 4, 3, 3))), Tensor(np.full(3, 0.5)), 1)
    out = reconstruct(rand(rng, 4, 7, 5), ReconParams([], out_conv))
    assert out.shape == (3, 7, 5)
    assert np.all(out.data == 0.5)


def test_reconstruct_gradients_fd(rng):
    c = 8
    p = ReconParams([init_res_block(c, rng, residual_gain=1.0) for _ in range(2)], init_conv(ConvSpec(c, 3), rng))
    x = rand(rng, c, 5, 5)
    d = rng.standard_normal((3, 5, 5))
    fn = lambda: project(reconstruct(x, p), d)
    tensors = [x, p.out.weight, p.out.bias, p.blocks[0].conv1.weight, p.blocks[1].conv2.weight]
    assert max_rel_error(check_gradients(fn, tensors, probes=25, h=1e-6, rng=rng)) <= 1e-4


def test_reconstruct_channel_error(rng):
    p = ReconParams([], init_conv(ConvSpec(4, 3), rng))
    with pytest.raises(ShapeError):
        reconstruct(rand(rng, 5, 4, 4), p)


# ---------------------------------------------------------------- full model


@pytest.mark.parametrize("h, w", [(16, 16), (13, 18)])
def test_interpolate_shape_and_finite(rng, h, w):
    params = init_model(tiny_config(), seed=1)
    out = interpolate(Tensor(rng.random((3, h, w))), Tensor(rng.random((3, h, w))), params)
    assert out.shape == (3, h, w)
    assert np.all(np.isfinite(out.data))


def test_interpolate_identity_configuration_is_finite(rng):
    cfg = tiny_config()
    params = init_model(cfg, seed=2)
    c = cfg.channels
    for p in (params.align_fwd, params.align_bwd):
        p.csf1 = passthrough_conv(2 * c, c, c)
        p.csf0 = passthrough_conv(3 * c, c, 2 * c)
    params.fusion.conv = ConvParams(Tensor(np.zeros((c, 2 * c, 3, 3))), Tensor(np.full(c, 50.0)), 1)
    a, b = rng.random((2, 3, 12, 12))
    out = interpolate(Tensor(a), Tensor(b), params)
    assert np.all(np.isfinite(out.data))
    # identity heads plus a saturated mask keep only frame_a's own level-0 features
    other_b = interpolate(Tensor(a), Tensor(rng.random((3, 12, 12))), params)
    np.testing.assert_allclose(out.data, other_b.data, atol=1e-9)


def test_interpolate_time_symmetric_plumbing(rng):
    cfg = tiny_config()
    params = init_model(cfg, seed=3)
    swapped = init_model(cfg, seed=3)
    swapped.align_fwd, swapped.align_bwd = params.align_bwd, params.align_fwd
    a, b = rng.random((2, 3, 12, 12))
    # with a constant 0.5 mask, swapping frames and directions leaves the output unchanged
    params.fusion.conv = ConvParams(Tensor(np.zeros((4, 8, 3, 3))), Tensor(np.zeros(4)), 1)
    swapped.fusion = params.fusion
    np.testing.assert_allclose(interpolate(Tensor(a), Tensor(b), params).data,
                               interpolate(Tensor(b), Tensor(a), swapped).data, atol=1e-12)


def test_interpolate_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        interpolate(Tensor(rng.random((3, 8, 8))), Tensor(rng.random((3, 8, 9))), init_model(tiny_config()))


def test_init_is_seeded():
    a = named_parameters(init_model(tiny_config(), seed=5))
    b = named_parameters(init_model(tiny_config(), seed=5))
    c = named_parameters(init_model(tiny_config(), seed=6))
    assert all(np.array_equal(x.data, y.data) for (_, x), (_, y) in zip(a, b))
    assert not all(np.array_equal(x.data, y.data) for (_, x), (_, y) in zip(a, c))


# ---------------------------------------------------------------- parameter counts


def test_paper_counts():
    counts = count_params(ModelConfig.paper())
    assert counts["res_block"] == 295_168
    assert counts["extraction"] == 1_774_592
    assert counts["fusion"] == 295_040
    assert counts["reconstruction"] == 11_810_179
    assert counts["alignment"] == 2 * (3 * 1_802_011 + 295_040 + 442_496)
    assert counts["total"] == counts["extraction"] + counts["alignment"] + counts["fusion"] + counts["reconstruction"]


@pytest.mark.parametrize("cfg", [ModelConfig.toy(), tiny_config(), ModelConfig(8, 2, 1, 2)])
def test_counts_match_allocated_tensors(cfg):
    params = init_model(cfg)
    allocated = sum(t.size for _, t in named_parameters(params))
    assert allocated == count_params(params)["total"]


def test_named_config():
    assert ModelConfig.named("paper").channels == 128
    with pytest.raises(ConfigError):
        ModelConfig.named("huge")


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    params = init_model(tiny_config(), seed=9)
    for _, t in named_parameters(params):
        t.data = rng.standard_normal(t.shape)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.config == params.config
    for (na, a), (nb, b) in zip(named_parameters(params), named_parameters(loaded)):
        assert na == nb
        assert a.data.tobytes() == b.data.tobytes()
    save_checkpoint(loaded, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_header_lists_tensors(tmp_path):
    params = init_model(tiny_config())
    save_checkpoint(params, tmp_path / "m.ckpt")
    header = read_checkpoint_header(tmp_path / "m.ckpt")
    assert header["config"]["channels"] == 4
    assert len(header["tensors"]) == len(named_parameters(params))


def test_checkpoint_config_mismatch(tmp_path):
    save_checkpoint(init_model(tiny_config()), tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "m.ckpt", ModelConfig.toy())


def test_checkpoint_garbage(tmp_path):
    (tmp_path / "bad.ckpt").write_bytes(b"\x05\x00\x00\x00\x00\x00\x00\x00hello")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")
