# tests/test_encoding.py

import math

import numpy as np
import pytest

from src.encoding.features import (
    FeatureMap,
    builtin_pyramid_encoder,
    decode_feature_map,
    encode_feature_map,
    load_feature_map,
    point_feature,
    sample_feature,
    sample_features,
    save_feature_map,
)
from src.encoding.positional import encoded_width, positional_encode
from src.geometry.camera import Camera
from src.utils.errors import FormatError


# --------- Positional encoding --------- #

def test_origin_encodes_to_zero_sines_and_unit_cosines():
    out = positional_encode(np.zeros(3), 2)
    assert out.shape == (15,)
    np.testing.assert_array_equal(out[:3], 0.0)
    for band in range(2):
        start = 3 + 6 * band
        np.testing.assert_array_equal(out[start:start + 3], 0.0)
        np.testing.assert_array_equal(out[start + 3:start + 6], 1.0)


def test_half_unit_x_hits_the_sine_peak():
    out = positional_encode(np.array([0.5, 0.0, 0.0]), 1)
    assert out[3] == pytest.approx(1.0, abs=1e-12)
    assert out[6] == pytest.approx(0.0, abs=1e-12)


def test_encoding_matches_direct_formula():
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, size=3)
    out = positional_encode(p, 6)
    expected = list(p)
    for band in range(6):
        expected += [math.sin(2 ** band * math.pi * c) for c in p]
        expected += [math.cos(2 ** band * math.pi * c) for c in p]
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_widths_and_batches():
    for L in range(11):
        assert positional_encode(np.ones(3), L).shape == (encoded_width(L),) == (3 + 6 * L,)
    batch = np.random.default_rng(1).uniform(-1, 1, size=(5, 3))
    out = positional_encode(batch, 3)
    assert out.shape == (5, 21)
    assert np.all(np.abs(out) <= 1.0)
    np.testing.assert_array_equal(out[2], positional_encode(batch[2], 3))
    with pytest.raises(ValueError):
        positional_encode(np.zeros(3), -1)


# --------- Built-in encoder --------- #

def reference_resample(image: np.ndarray, factor: int) -> np.ndarray:
    h, w, _ = image.shape
    ch, cw = -(-h // factor), -(-w // factor)
    coarse = np.zeros((ch, cw, 3))
    for i in range(ch):
        for j in range(cw):
            coarse[i, j] = image[i * factor:(i + 1) * factor, j * factor:(j + 1) * factor].mean(axis=(0, 1))

    def taps(n, n_coarse):
        pos = min(max((n + 0.5) / factor - 0.5, 0.0), n_coarse - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, n_coarse - 1)
        return lo, hi, pos - lo

    out = np.zeros_like(image)
    for y in range(h):
        y0, y1, fy = taps(y, ch)
        for x in range(w):
            x0, x1, fx = taps(x, cw)
            top = (1 - fx) * coarse[y0, x0] + fx * coarse[y0, x1]
            bottom = (1 - fx) * coarse[y1, x0] + fx * coarse[y1, x1]
            out[y, x] = (1 - fy) * top + fy * bottom
    return out


def test_constant_image_is_a_fixed_point():
    fm = builtin_pyramid_encoder(np.full((20, 24, 3), 0.5))
    assert fm.dim == 9
    np.testing.assert_allclose(fm.values, 0.5, rtol=0, atol=1e-12)


def test_pyramid_channels_match_reference_resampler():
    image = np.random.default_rng(2).random((64, 64, 3))
    fm = builtin_pyramid_encoder(image)
    np.testing.assert_array_equal(fm.values[..., :3], image)
    np.testing.assert_allclose(fm.values[..., 3:6], reference_resample(image, 4), rtol=0, atol=1e-9)
    np.testing.assert_allclose(fm.values[..., 6:9], reference_resample(image, 16), rtol=0, atol=1e-9)
    assert builtin_pyramid_encoder(image).values.tobytes() == fm.values.tobytes()


def test_encoder_handles_sizes_that_do_not_divide():
    image = np.random.default_rng(3).random((10, 13, 3))
    fm = builtin_pyramid_encoder(image)
    assert (fm.height, fm.width) == (10, 13)
    np.testing.assert_allclose(fm.values[..., 3:6], reference_resample(image, 4), atol=1e-9)


# --------- Lookup --------- #

def test_texel_centre_and_midpoint_lookups():
    fm = FeatureMap(np.random.default_rng(4).random((6, 8, 5)))
    np.testing.assert_array_equal(sample_feature(fm, 3.5, 2.5), fm.values[2, 3])
    np.testing.assert_allclose(sample_feature(fm, 4.0, 2.5), 0.5 * (fm.values[2, 3] + fm.values[2, 4]), atol=1e-15)


def test_bilinear_matches_four_texel_oracle():
    rng = np.random.default_rng(5)
    fm = FeatureMap(rng.random((6, 8, 4)))
    us = rng.uniform(0.5, 7.5, size=100)
    vs = rng.uniform(0.5, 5.5, size=100)
    got = sample_features(fm, us, vs)
    for i, (u, v) in enumerate(zip(us, vs)):
        x, y = u - 0.5, v - 0.5
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        x1, y1 = min(x0 + 1, 7), min(y0 + 1, 5)
        ax, ay = x - x0, y - y0
        expected = (
            (1 - ax) * (1 - ay) * fm.values[y0, x0]
            + ax * (1 - ay) * fm.values[y0, x1]
            + (1 - ax) * ay * fm.values[y1, x0]
            + ax * ay * fm.values[y1, x1]
        )
        np.testing.assert_allclose(got[i], expected, rtol=0, atol=1e-12)


def test_outside_the_image_gives_zeros():
    fm = FeatureMap(np.ones((4, 4, 3)))
    for u, v in [(-0.01, 1.0), (4.01, 1.0), (1.0, -0.5), (1.0, 4.2), (np.nan, 1.0)]:
        np.testing.assert_array_equal(sample_feature(fm, u, v), np.zeros(3))
    # the closed border still interpolates (clamped) values
    np.testing.assert_array_equal(sample_feature(fm, 4.0, 4.0), np.ones(3))


def test_point_feature_projection():
    cam = Camera(fx=10.0, fy=10.0, cx=8.5, cy=6.5, width=16, height=12, name="view_000")
    fm = FeatureMap(np.random.default_rng(6).random((12, 16, 9)), source_view="view_000")
    np.testing.assert_array_equal(point_feature([0.0, 0.0, -2.0], cam, fm), fm.values[6, 8])
    np.testing.assert_array_equal(point_feature([0.0, 0.0, 3.0], cam, fm), np.zeros(9))

    x = np.array([0.13, -0.07, -1.7])
    u = 10.0 * x[0] / 1.7 + 8.5
    v = -10.0 * x[1] / 1.7 + 6.5
    np.testing.assert_allclose(point_feature(x, cam, fm), sample_feature(fm, u, v), atol=1e-12)

    with pytest.raises(ValueError):
        point_feature(x, cam, FeatureMap(fm.values, source_view="view_001"))


# --------- File format --------- #

def test_feature_file_round_trip(tmp_path):
    fm = builtin_pyramid_encoder(np.random.default_rng(7).random((8, 12, 3)))
    first = save_feature_map(tmp_path / "a.hffeat", fm)
    loaded = load_feature_map(first, source_view="view_000")
    assert (loaded.width, loaded.height, loaded.dim, loaded.source_view) == (12, 8, 9, "view_000")
    np.testing.assert_array_equal(loaded.values, fm.values.astype(np.float32))
    second = save_feature_map(tmp_path / "b.hffeat", loaded)
    assert first.read_bytes() == second.read_bytes()


def test_corrupt_feature_files(tmp_path):
    blob = encode_feature_map(FeatureMap(np.ones((2, 2, 3))))
    with pytest.raises(FormatError, match="magic"):
        decode_feature_map(b"HFFEAT2\n" + blob[8:])
    with pytest.raises(FormatError):
        decode_feature_map(blob[:-4])
    missing = tmp_path / "none.hffeat"
    with pytest.raises(FileNotFoundError, match="none.hffeat"):
        load_feature_map(missing)
