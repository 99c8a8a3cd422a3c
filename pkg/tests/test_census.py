import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bits_to_byte, brute_force_match, census_bits, patch_xor_count
from vfi.census import (
    CensusField,
    census_patch_distance,
    census_transform,
    luminance,
    match,
)
from vfi.autograd import Tensor
from vfi.errors import ConfigError, ShapeError


def lum_of(arr2d):
    return Tensor(np.asarray(arr2d, dtype=float)[None])


def field_from_oracle(lum2d):
    bits = census_bits(lum2d)
    return np.array([[bits_to_byte(b) for b in row] for row in bits], dtype=np.uint8)


# ---------------------------------------------------------------- luminance


def test_luminance_gray_is_identity(rng):
    v = rng.random((5, 4))
    out = luminance(Tensor(np.stack([v, v, v])))
    np.testing.assert_allclose(out.data[0], v, rtol=0, atol=1e-15)


def test_luminance_black_and_red():
    assert np.all(luminance(Tensor(np.zeros((3, 2, 2)))).data == 0)
    red = np.zeros((3, 2, 2))
    red[0] = 1.0
    assert np.all(luminance(Tensor(red)).data == 0.299)


def test_luminance_rejects_wrong_channels():
    with pytest.raises(ShapeError):
        luminance(Tensor(np.zeros((4, 2, 2))))


# ---------------------------------------------------------------- census_transform


def test_constant_image_all_ones():
    f = census_transform(lum_of(np.full((4, 5), 0.3)))
    assert np.all(f.bits == 0xFF)


def test_single_bright_pixel_hand_enumeration():
    img = np.zeros((3, 3))
    img[1, 1] = 1.0
    bits = census_transform(lum_of(img)).bits
    # bright centre is strictly greater than all eight neighbours
    assert bits[1, 1] == 0
    # a dark pixel is never strictly greater than any neighbour, so every bit is 1
    for y in range(3):
        for x in range(3):
            if (y, x) != (1, 1):
                assert bits[y, x] == 0xFF


def test_single_dark_pixel_hand_enumeration():
    # inverse case: one dark pixel among bright ones
    img = np.ones((3, 3))
    img[1, 1] = 0.0
    bits = census_transform(lum_of(img)).bits
    assert bits[1, 1] == 0xFF
    # neighbour (0, 0): its (1, 1) neighbour is the dark centre -> bit for
    # offset (+1, +1), index 7, is 0; every other neighbour ties or is a
    # replicate-edge copy of a bright pixel
    assert bits[0, 0] == 0xFF & ~(1 << 7)
    # neighbour (0, 1): the dark pixel sits at offset (+1, 0), index 6
    assert bits[0, 1] == 0xFF & ~(1 << 6)
    # neighbour (1, 2): dark pixel at offset (0, -1), index 3
    assert bits[1, 2] == 0xFF & ~(1 << 3)
    # neighbour (2, 2): offset (-1, -1), index 0
    assert bits[2, 2] == 0xFF & ~(1 << 0)


def test_census_matches_loop_oracle(rng):
    lum = rng.random((9, 7))
    np.testing.assert_array_equal(census_transform(lum_of(lum)).bits, field_from_oracle(lum))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), gamma=st.floats(0.2, 5.0))
def test_census_invariant_under_monotone_map(seed, gamma):
    lum = np.random.default_rng(seed).random((8, 8)) * 0.98 + 0.01
    a = census_transform(lum_of(lum)).bits
    b = census_transform(lum_of(lum**gamma)).bits
    c = census_transform(lum_of(np.log(lum) * 3 + 7)).bits
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, c)


# ---------------------------------------------------------------- patch distance


def test_identical_patches_zero(rng):
    f = census_transform(lum_of(rng.random((6, 6))))
    assert census_patch_distance(f, (2, 3), f, (2, 3), 3) == 0


def test_complementary_patches_max():
    a = CensusField(np.zeros((5, 5), dtype=np.uint8))
    b = CensusField(np.full((5, 5), 0xFF, dtype=np.uint8))
    assert census_patch_distance(a, (2, 2), b, (2, 2), 3) == 72


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), k=st.sampled_from([1, 3, 5]))
def test_patch_distance_matches_bit_count_oracle(seed, k):
    rng = np.random.default_rng(seed)
    la, lb = rng.random((2, 7, 6))
    fa, fb = census_transform(lum_of(la)), census_transform(lum_of(lb))
    oa, ob = census_bits(la), census_bits(lb)
    pa = (int(rng.integers(7)), int(rng.integers(6)))
    pb = (int(rng.integers(7)), int(rng.integers(6)))
    assert census_patch_distance(fa, pa, fb, pb, k) == patch_xor_count(oa, pa, ob, pb, k)


def test_patch_distance_rejects_even_k(rng):
    f = census_transform(lum_of(rng.random((4, 4))))
    with pytest.raises(ConfigError):
        census_patch_distance(f, (0, 0), f, (0, 0), 4)


# ---------------------------------------------------------------- match


def test_self_match_prefers_first_frame(rng):
    a, b = rng.random((2, 10, 10))
    fa, fb = census_transform(lum_of(a)), census_transform(lum_of(b))
    res = match(fa, (fa, fb), d=2, k=3)
    ys, xs = np.mgrid[0:10, 0:10]
    assert np.all(res.distance == 0)
    assert np.all(res.frame == -1)
    np.testing.assert_array_equal(res.pos_y, ys)
    np.testing.assert_array_equal(res.pos_x, xs)


def test_ties_prefer_zero_displacement():
    # flat regions give identical census patches everywhere; the pixel itself must win
    flat = np.full((6, 6), 0.5)
    f = census_transform(lum_of(flat))
    res = match(f, (f, f), d=2, k=3)
    ys, xs = np.mgrid[0:6, 0:6]
    np.testing.assert_array_equal(res.pos_y, ys)
    np.testing.assert_array_equal(res.pos_x, xs)
    assert np.all(res.frame == -1)


def test_ties_order_frames_before_raster():
    first = census_transform(lum_of(np.full((5, 5), 0.2)))
    second = census_transform(lum_of(np.full((5, 5), 0.9)))
    res = match(second, (first, second), d=1, k=1)
    # both frames tie at distance 0 and zero displacement; frame -1 comes first
    assert np.all(res.frame == -1)
    assert np.all(res.distance == 0)


def test_tie_values_select_matching_colour():
    first, second = np.full((3, 5, 5), 0.2), np.full((3, 5, 5), 0.9)
    fields = [census_transform(luminance(Tensor(v))) for v in (second, first, second)]
    res = match(fields[0], (fields[1], fields[2]), d=1, k=1, tie_values=(second, (first, second)))
    assert np.all(res.frame == 1)


def test_tie_values_match_brute_force_oracle(rng):
    pred, f0, f1 = np.round(rng.random((3, 3, 9, 9)) * 2) / 2
    lums = [0.299 * v[0] + 0.587 * v[1] + 0.114 * v[2] for v in (pred, f0, f1)]
    fields = [census_transform(luminance(Tensor(v))) for v in (pred, f0, f1)]
    got = match(fields[0], (fields[1], fields[2]), d=2, k=3, tie_values=(pred, (f0, f1)))
    py, px, pt, pd = brute_force_match(census_bits(lums[0]), [census_bits(lums[1]), census_bits(lums[2])], 2, 3, pred, [f0, f1])
    np.testing.assert_array_equal(got.distance, pd)
    np.testing.assert_array_equal(got.frame, pt)
    np.testing.assert_array_equal(got.pos_y, py)
    np.testing.assert_array_equal(got.pos_x, px)


def test_translated_texture_recovers_shift(rng):
    tex = rng.random((24, 24))
    other = rng.random((16, 16))
    frame1 = tex[4:20, 4:20]
    pred = tex[4:20, 6:22]  # pred(x) = frame1(x + (0, 2))
    res = match(census_transform(lum_of(pred)), (census_transform(lum_of(other)), census_transform(lum_of(frame1))), d=3, k=3)
    inner = (slice(2, 14), slice(2, 12))
    ys, xs = np.mgrid[0:16, 0:16]
    assert np.all(res.distance[inner] == 0)
    assert np.all(res.frame[inner] == 1)
    np.testing.assert_array_equal(res.pos_y[inner], ys[inner])
    np.testing.assert_array_equal(res.pos_x[inner], xs[inner] + 2)


def test_match_equals_brute_force_oracle(rng):
    pred, f0, f1 = rng.random((3, 16, 16))
    got = match(census_transform(lum_of(pred)), (census_transform(lum_of(f0)), census_transform(lum_of(f1))), d=1, k=3)
    py, px, pt, pd = brute_force_match(census_bits(pred), [census_bits(f0), census_bits(f1)], 1, 3)
    np.testing.assert_array_equal(got.distance, pd)
    np.testing.assert_array_equal(got.frame, pt)
    np.testing.assert_array_equal(got.pos_y, py)
    np.testing.assert_array_equal(got.pos_x, px)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16), d=st.integers(1, 3), k=st.sampled_from([1, 3, 5]))
def test_match_exhaustive_and_deterministic(seed, d, k):
    rng = np.random.default_rng(seed)
    # quantised values create ties, exercising the tie-break order
    pred, f0, f1 = np.round(rng.random((3, 7, 8)) * 3)
    fields = [census_transform(lum_of(v)) for v in (pred, f0, f1)]
    res = match(fields[0], (fields[1], fields[2]), d=d, k=k)
    again = match(fields[0], (fields[1], fields[2]), d=d, k=k)
    for a, b in zip((res.pos_y, res.pos_x, res.frame, res.distance), (again.pos_y, again.pos_x, again.frame, again.distance)):
        np.testing.assert_array_equal(a, b)
    py, px, pt, pd = brute_force_match(*(census_bits(v) for v in (pred,)), [census_bits(f0), census_bits(f1)], d, k)
    np.testing.assert_array_equal(res.distance, pd)
    np.testing.assert_array_equal(res.pos_y, py)
    np.testing.assert_array_equal(res.pos_x, px)
    np.testing.assert_array_equal(res.frame, pt)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_match_illumination_invariant(seed):
    rng = np.random.default_rng(seed)
    pred, f0, f1 = rng.random((3, 10, 10)) * 0.9 + 0.05

    def run(g):
        fs = [census_transform(lum_of(g(v))) for v in (pred, f0, f1)]
        return match(fs[0], (fs[1], fs[2]), d=2, k=3)

    a, b = run(lambda v: v), run(lambda v: v**2.2)
    for x, y in zip((a.pos_y, a.pos_x, a.frame, a.distance), (b.pos_y, b.pos_x, b.frame, b.distance)):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("d", [0, -1, 2.5])
def test_match_rejects_bad_displacement(rng, d):
    f = census_transform(lum_of(rng.random((5, 5))))
    with pytest.raises(ConfigError):
        match(f, (f, f), d=d, k=3)


def test_match_rejects_resolution_mismatch(rng):
    a = census_transform(lum_of(rng.random((5, 5))))
    b = census_transform(lum_of(rng.random((5, 6))))
    with pytest.raises(ShapeError):
        match(a, (a, b), d=1)
