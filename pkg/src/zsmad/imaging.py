"""Image decoding and encoder input preprocessing.

decode() yields 8-bit RGB pixel arrays; preprocess() turns one into the
normalized float32 CHW tensor the image encoder consumes. The resampler is
implemented here (separable, half-pixel centers, edge replication) so the
output is bit-reproducible across platforms and library versions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError

RawImage = np.ndarray  # (H, W, 3) uint8, RGB
ImageTensor = np.ndarray  # (3, S, S) float32


class ResizeMode(Enum):
    SHORTER_SIDE_THEN_CENTER_CROP = "shorter-side-then-center-crop"
    DIRECT_RESIZE = "direct-resize"


class Interpolation(Enum):
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


@dataclass(frozen=True)
class PreprocessSpec:
    target_size: int = 224
    resize_mode: ResizeMode = ResizeMode.SHORTER_SIDE_THEN_CENTER_CROP
    channel_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    channel_std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    interpolation: Interpolation = Interpolation.BICUBIC

    def __post_init__(self):
        if self.target_size <= 0:
            raise ValueError("target_size must be positive")
        if any(s <= 0 for s in self.channel_std):
            raise ValueError("channel_std components must be positive")


def decode(path) -> RawImage:
    """Decode a PNG or JPEG file to an (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise DecodeError(f"{path}: unsupported format {im.format!r}")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DecodeError(f"{path}: {e}")
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DecodeError(f"{path}: empty or malformed image")
    return arr


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # half-pixel-center convention: src = (dst + 0.5) * (in/out) - 0.5
    scale = n_in / n_out
    return (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5


def _resize_axis_bilinear(img: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = img.shape[axis]
    x = _source_coords(n_out, n_in)
    x0 = np.floor(x).astype(np.int64)
    frac = x - x0
    i0 = np.clip(x0, 0, n_in - 1)
    i1 = np.clip(x0 + 1, 0, n_in - 1)
    a = np.take(img, i0, axis=axis)
    b = np.take(img, i1, axis=axis)
    shape = [1] * img.ndim
    shape[axis] = n_out
    w = frac.reshape(shape)
    return a * (1.0 - w) + b * w


def _cubic_kernel(t: np.ndarray, a: float = -0.75) -> np.ndarray:
    # Keys kernel with a = -0.75 (the common convnet-preprocessing choice)
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    out = np.where(
        t <= 1.0,
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0,
        np.where(t < 2.0, a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a, 0.0),
    )
    return out


def _resize_axis_bicubic(img: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = img.shape[axis]
    x = _source_coords(n_out, n_in)
    x0 = np.floor(x).astype(np.int64)
    frac = x - x0
    shape = [1] * img.ndim
    shape[axis] = n_out
    acc = np.zeros(np.take(img, np.zeros(n_out, dtype=np.int64), axis=axis).shape)
    for k in (-1, 0, 1, 2):
        idx = np.clip(x0 + k, 0, n_in - 1)
        w = _cubic_kernel(frac - k).reshape(shape)
        acc = acc + np.take(img, idx, axis=axis) * w
    return acc


def resize(img: np.ndarray, out_h: int, out_w: int, interpolation: Interpolation) -> np.ndarray:
    """Separable resize of an (H, W, C) array; returns float64."""
    data = img.astype(np.float64)
    fn = _resize_axis_bilinear if interpolation is Interpolation.BILINEAR else _resize_axis_bicubic
    if data.shape[0] != out_h:
        data = fn(data, out_h, axis=0)
    if data.shape[1] != out_w:
        data = fn(data, out_w, axis=1)
    return data


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    top = (h - size) // 2
    left = (w - size) // 2
    return img[top:top + size, left:left + size]


def preprocess(img: RawImage, spec: PreprocessSpec) -> ImageTensor:
    """Resize per spec, scale to [0,1], normalize per channel; float32 CHW.

    Accepts 8-bit RGB input only; the operation is not defined on already
    preprocessed tensors.
    """
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise TypeError("preprocess expects an (H, W, 3) uint8 array")
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"bad image shape {img.shape}")

    size = spec.target_size
    if spec.resize_mode is ResizeMode.DIRECT_RESIZE:
        resized = resize(img, size, size, spec.interpolation)
    else:
        h, w = img.shape[:2]
        if h <= w:
            new_h = size
            new_w = max(size, int(round(w * size / h)))
        else:
            new_w = size
            new_h = max(size, int(round(h * size / w)))
        resized = center_crop(resize(img, new_h, new_w, spec.interpolation), size)

    scaled = resized / 255.0
    mean = np.asarray(spec.channel_mean, dtype=np.float64)
    std = np.asarray(spec.channel_std, dtype=np.float64)
    normalized = (scaled - mean) / std
    tensor = np.ascontiguousarray(normalized.transpose(2, 0, 1)).astype(np.float32)
    if not np.all(np.isfinite(tensor)):
        raise ValueError("preprocess produced non-finite values")
    return tensor
