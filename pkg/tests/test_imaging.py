"""Image decoding and preprocessing against the naive resampling oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from oracles import (
    oracle_preprocess_uniform,
    oracle_resize_bicubic,
    oracle_resize_bilinear,
)
from zsmad.errors import DecodeError
from zsmad.imaging import (
    Interpolation,
    PreprocessSpec,
    ResizeMode,
    center_crop,
    decode,
    preprocess,
    resize,
)


def save_png(tmp_path, arr, name="img.png"):
    path = tmp_path / name
    Image.fromarray(arr).save(path)
    return path


def test_decode_all_white(tmp_path):
    path = save_png(tmp_path, np.full((2, 2, 3), 255, dtype=np.uint8))
    out = decode(path)
    assert out.shape == (2, 2, 3)
    assert out.dtype == np.uint8
    assert (out == 255).all()


def test_decode_jpeg(tmp_path):
    arr = np.zeros((8, 8, 3), dtype=np.uint8)
    path = tmp_path / "img.jpg"
    Image.fromarray(arr).save(path, "JPEG")
    assert decode(path).shape == (8, 8, 3)


def test_decode_grayscale_promoted_to_rgb(tmp_path):
    path = tmp_path / "gray.png"
    Image.fromarray(np.full((4, 4), 7, dtype=np.uint8), mode="L").save(path)
    out = decode(path)
    assert out.shape == (4, 4, 3)
    assert (out == 7).all()


def test_decode_truncated_file(tmp_path):
    path = save_png(tmp_path, np.zeros((16, 16, 3), dtype=np.uint8))
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(DecodeError):
        decode(path)


def test_decode_non_image(tmp_path):
    path = tmp_path / "not.png"
    path.write_text("plain text")
    with pytest.raises(DecodeError):
        decode(path)


def test_decode_unsupported_format(tmp_path):
    path = tmp_path / "img.bmp"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(path, "BMP")
    with pytest.raises(DecodeError, match="unsupported"):
        decode(path)


def test_preprocess_uniform_closed_form():
    v, mean, std = 200, (0.48, 0.46, 0.41), (0.27, 0.26, 0.28)
    spec = PreprocessSpec(target_size=8, channel_mean=mean, channel_std=std,
                          resize_mode=ResizeMode.DIRECT_RESIZE)
    img = np.full((8, 8, 3), v, dtype=np.uint8)
    out = preprocess(img, spec)
    assert out.shape == (3, 8, 8)
    assert out.dtype == np.float32
    expected = oracle_preprocess_uniform(v, mean, std)
    for c in range(3):
        assert out[c] == pytest.approx(expected[c], abs=1e-6)


def test_preprocess_symmetric_double_is_resize_only():
    # 448 -> 224 via shorter-side keeps the aspect ratio; the crop is identity
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (448, 448, 3), dtype=np.uint8)
    spec_crop = PreprocessSpec(target_size=224)
    spec_direct = PreprocessSpec(target_size=224, resize_mode=ResizeMode.DIRECT_RESIZE)
    assert np.array_equal(preprocess(img, spec_crop), preprocess(img, spec_direct))


def test_bilinear_gradient_matches_oracle():
    # 3x5 gradient downsampled to 2x2, checked element-for-element
    img = np.arange(3 * 5 * 3, dtype=np.uint8).reshape(3, 5, 3)
    got = resize(img, 2, 2, Interpolation.BILINEAR)
    want = np.array(oracle_resize_bilinear(img.tolist(), 2, 2))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("shape,out_hw", [
    ((3, 5), (2, 2)),
    ((7, 4), (11, 9)),
    ((10, 10), (4, 16)),
    ((1, 6), (3, 3)),
])
def test_bilinear_random_matches_oracle(shape, out_hw):
    rng = np.random.default_rng(shape[0] * 100 + shape[1])
    img = rng.integers(0, 256, (*shape, 3), dtype=np.uint8)
    got = resize(img, *out_hw, Interpolation.BILINEAR)
    want = np.array(oracle_resize_bilinear(img.tolist(), *out_hw))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)


@pytest.mark.parametrize("shape,out_hw", [
    ((3, 5), (2, 2)),
    ((6, 6), (9, 9)),
    ((8, 5), (4, 7)),
])
def test_bicubic_random_matches_oracle(shape, out_hw):
    rng = np.random.default_rng(shape[0] * 7 + shape[1])
    img = rng.integers(0, 256, (*shape, 3), dtype=np.uint8)
    got = resize(img, *out_hw, Interpolation.BICUBIC)
    want = np.array(oracle_resize_bicubic(img.tolist(), *out_hw))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)


def test_resize_identity_when_size_matches():
    img = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
    out = resize(img, 4, 4, Interpolation.BICUBIC)
    np.testing.assert_array_equal(out, img.astype(np.float64))


def test_center_crop_takes_middle():
    img = np.arange(6 * 8 * 1).reshape(6, 8, 1)
    out = center_crop(img, 4)
    assert out.shape == (4, 4, 1)
    np.testing.assert_array_equal(out, img[1:5, 2:6])


def test_preprocess_rejects_non_uint8():
    spec = PreprocessSpec(target_size=4)
    with pytest.raises(TypeError):
        preprocess(np.zeros((4, 4, 3), dtype=np.float32), spec)


def test_preprocess_rejects_bad_shape():
    spec = PreprocessSpec(target_size=4)
    with pytest.raises(ValueError):
        preprocess(np.zeros((4, 4), dtype=np.uint8), spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        PreprocessSpec(target_size=0)
    with pytest.raises(ValueError):
        PreprocessSpec(channel_std=(0.0, 1.0, 1.0))


@settings(max_examples=30, deadline=None)
@given(
    h=st.integers(min_value=1, max_value=40),
    w=st.integers(min_value=1, max_value=40),
    seed=st.integers(min_value=0, max_value=2**31),
    interp=st.sampled_from(list(Interpolation)),
    mode=st.sampled_from(list(ResizeMode)),
)
def test_preprocess_always_finite(h, w, seed, interp, mode):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    spec = PreprocessSpec(target_size=16, resize_mode=mode, interpolation=interp)
    out = preprocess(img, spec)
    assert out.shape == (3, 16, 16)
    assert np.isfinite(out).all()


def test_preprocess_deterministic():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, (30, 50, 3), dtype=np.uint8)
    spec = PreprocessSpec(target_size=16)
    a = preprocess(img, spec)
    b = preprocess(img, spec)
    np.testing.assert_array_equal(a, b)
