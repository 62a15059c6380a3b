"""Perturbation-based local explanation of the image branch.

Segments the image on a regular grid, scores randomly masked variants
(masked segments filled with the per-image mean color), and fits a
weighted ridge-regularized linear surrogate whose coefficients say which
regions push the morph probability up or down.

Sample weights use an exponential kernel on the distance to the unmasked
image: weight = exp(-(d / width)^2) with d the Euclidean distance between
binary masks (the square root of the Hamming count) and width defaulting
to 0.25 * sqrt(n_segments).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from PIL import Image

from .classifier import PromptPair, pair_embeddings, score_embeddings
from .errors import SingularFitError
from .imaging import RawImage, preprocess
from .bundle import ModelBundle, encode_images

DEFAULT_SEGMENTS = 49
DEFAULT_SAMPLES = 1000
RIDGE_STRENGTH = 1.0
_SCORE_BATCH = 32


@dataclass(frozen=True)
class SegmentMask:
    grid: np.ndarray  # (H, W) int segment ids
    n_segments: int


@dataclass(frozen=True)
class SaliencyMap:
    weights: np.ndarray  # (n_segments,) surrogate coefficients
    fit_quality: float   # coefficient of determination, clamped to [0, 1]
    grid_shape: tuple[int, int]


def segment(img: RawImage, n: int) -> SegmentMask:
    """Regular ceil(sqrt(n)) x ceil(sqrt(n)) grid clipped to image bounds."""
    if n < 1:
        raise ValueError("segment count must be >= 1")
    h, w = img.shape[:2]
    k = math.isqrt(n)
    if k * k < n:
        k += 1
    if k > min(h, w):
        raise ValueError(f"{n} segments need a grid of {k}, larger than image {h}x{w}")
    cell_h = -(-h // k)
    cell_w = -(-w // k)
    rows = np.minimum(np.arange(h) // cell_h, k - 1)
    cols = np.minimum(np.arange(w) // cell_w, k - 1)
    grid = rows[:, None] * k + cols[None, :]
    return SegmentMask(grid=grid.astype(np.int64), n_segments=k * k)


def kernel_weights(on_matrix: np.ndarray, kernel_width: float) -> np.ndarray:
    hamming = (on_matrix == 0).sum(axis=1).astype(np.float64)
    d = np.sqrt(hamming)
    return np.exp(-((d / kernel_width) ** 2))


def _fit_surrogate(z: np.ndarray, y: np.ndarray, weights: np.ndarray,
                   ridge: float) -> tuple[np.ndarray, float]:
    n, k = z.shape
    mean_w = weights.mean()
    if not mean_w > 0:
        raise np.linalg.LinAlgError("all kernel weights vanished")
    # normalize to mean 1: keeps the WLS term unchanged while making the
    # ridge strength mean per-sample regardless of kernel scale
    weights = weights / mean_w
    design = np.concatenate([np.ones((n, 1)), z.astype(np.float64)], axis=1)
    sw = np.sqrt(weights)[:, None]
    if np.linalg.matrix_rank(design * sw) < k + 1:
        raise np.linalg.LinAlgError("rank-deficient design")
    penalty = np.eye(k + 1) * ridge
    penalty[0, 0] = 0.0  # intercept is not penalized
    a = design.T @ (design * weights[:, None]) + penalty
    b = design.T @ (weights * y)
    beta = np.linalg.solve(a, b)
    pred = design @ beta
    w_mean = float(np.average(y, weights=weights))
    total = float(np.sum(weights * (y - w_mean) ** 2))
    resid = float(np.sum(weights * (y - pred) ** 2))
    if total < 1e-18:
        r2 = 1.0
    else:
        r2 = 1.0 - resid / total
    return beta[1:], float(np.clip(r2, 0.0, 1.0))


def explain_with_scorer(
    img: RawImage,
    score_fn: Callable[[np.ndarray], np.ndarray],
    mask: SegmentMask,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    kernel_width: Optional[float] = None,
    ridge: float = RIDGE_STRENGTH,
) -> SaliencyMap:
    """Core surrogate fit against an arbitrary batch scorer.

    ``score_fn`` maps a (B, H, W, 3) uint8 batch to (B,) morph
    probabilities. Deterministic for a fixed seed; if the sampled design
    is rank-deficient, re-samples once with seed+1, then fails.
    """
    k = mask.n_segments
    if n_samples < k + 2:
        raise ValueError(f"need at least n_segments + 2 = {k + 2} samples, got {n_samples}")
    mean_color = img.reshape(-1, 3).mean(axis=0)
    fill = np.round(mean_color).astype(np.uint8)

    last_err = None
    for attempt_seed in (seed, seed + 1):
        rng = np.random.default_rng(attempt_seed)
        on = rng.integers(0, 2, size=(n_samples, k), dtype=np.int64)
        ys = np.empty(n_samples, dtype=np.float64)
        for start in range(0, n_samples, _SCORE_BATCH):
            chunk = on[start:start + _SCORE_BATCH]
            batch = np.repeat(img[None], len(chunk), axis=0)
            for row, mask_vec in enumerate(chunk):
                off_pixels = (mask_vec[mask.grid] == 0)
                batch[row][off_pixels] = fill
            ys[start:start + len(chunk)] = score_fn(batch)
        width = kernel_width if kernel_width is not None else 0.25 * math.sqrt(k)
        weights = kernel_weights(on, width)
        try:
            coef, r2 = _fit_surrogate(on.astype(np.float64), ys, weights, ridge)
        except np.linalg.LinAlgError as e:
            last_err = e
            continue
        kk = math.isqrt(k)
        return SaliencyMap(weights=coef, fit_quality=r2, grid_shape=(kk, kk))
    raise SingularFitError(f"design matrix rank-deficient after re-sampling: {last_err}")


def explain(
    img: RawImage,
    pair: PromptPair,
    bundle: ModelBundle,
    mask: SegmentMask,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    kernel_width: Optional[float] = None,
    ridge: float = RIDGE_STRENGTH,
) -> SaliencyMap:
    """Explain the morph probability of one image under one prompt pair."""
    spec = bundle.preprocess_spec()
    emb_b, emb_m = pair_embeddings(bundle, pair)
    scale = bundle.logit_scale

    def score_fn(batch: np.ndarray) -> np.ndarray:
        tensors = [preprocess(im, spec) for im in batch]
        embs = encode_images(bundle, tensors)
        return np.array([
            score_embeddings(e, emb_b, emb_m, scale, pair).p_morph for e in embs
        ])

    return explain_with_scorer(img, score_fn, mask, n_samples=n_samples,
                               seed=seed, kernel_width=kernel_width, ridge=ridge)


def save_saliency(saliency: SaliencyMap, path) -> None:
    payload = {
        "segment_weights": [float(w) for w in saliency.weights],
        "grid_shape": list(saliency.grid_shape),
        "fit_quality": saliency.fit_quality,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_overlay(img: RawImage, mask: SegmentMask, saliency: SaliencyMap,
                 path, alpha: float = 0.45) -> None:
    """Tint segments red toward morph-evidence, blue toward bona fide."""
    weights = saliency.weights
    peak = float(np.abs(weights).max())
    scale = peak if peak > 0 else 1.0
    tint = np.zeros(img.shape, dtype=np.float64)
    for seg in range(mask.n_segments):
        region = mask.grid == seg
        strength = weights[seg] / scale
        if strength >= 0:
            tint[region] = [255.0 * strength, 0.0, 0.0]
        else:
            tint[region] = [0.0, 0.0, -255.0 * strength]
    blended = np.clip(img.astype(np.float64) * (1 - alpha) + tint * alpha, 0, 255)
    Image.fromarray(blended.astype(np.uint8)).save(path, "PNG")
