from __future__ import annotations

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .types import AugmentConfig, ImageSample


def jitter_hsv(pixels: np.ndarray, dh: float, ds: float, dv: float) -> np.ndarray:
    """Add per-image offsets to hue (wrapping), saturation and value (clamped)."""
    hsv = rgb_to_hsv(np.clip(pixels, 0.0, 1.0).astype(np.float64))
    hsv[..., 0] = np.mod(hsv[..., 0] + dh, 1.0)
    hsv[..., 1] = np.clip(hsv[..., 1] + ds, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] + dv, 0.0, 1.0)
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0).astype(np.float32)


def shift2d(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate by (dy, dx) pixels, filling vacated area with zeros."""
    out = np.zeros_like(arr)
    h, w = arr.shape[:2]
    if abs(dy) >= h or abs(dx) >= w:
        return out
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = arr[ys, xs]
    return out


def augment_arrays(pixels, mask, cfg: AugmentConfig, rng: np.random.Generator):
    """Array-level augmentation; ``mask`` may be None.

    Draws a fixed number of random values per call regardless of which
    transforms are enabled, so toggling one transform does not change the
    draws seen by the others.
    """
    u = rng.random(6)
    px, m = pixels, mask
    if cfg.hsv_enabled and (cfg.hue or cfg.saturation or cfg.value):
        px = jitter_hsv(
            px,
            (2 * u[0] - 1) * cfg.hue,
            (2 * u[1] - 1) * cfg.saturation,
            (2 * u[2] - 1) * cfg.value,
        )
    if cfg.shift_enabled and cfg.max_shift > 0:
        h, w = px.shape[:2]
        dy = int(round((2 * u[3] - 1) * cfg.max_shift * h))
        dx = int(round((2 * u[4] - 1) * cfg.max_shift * w))
        if dy or dx:
            px = shift2d(px, dy, dx)
            m = None if m is None else shift2d(m, dy, dx)
    if cfg.flip_enabled and u[5] < cfg.flip_prob:
        px = px[:, ::-1]
        m = None if m is None else m[:, ::-1]
    px = np.ascontiguousarray(np.clip(px, 0.0, 1.0), dtype=np.float32)
    m = None if m is None else np.ascontiguousarray(m)
    return px, m


def augment_sample(sample: ImageSample, cfg: AugmentConfig, rng: np.random.Generator) -> ImageSample:
    px, m = augment_arrays(sample.pixels, sample.mask, cfg, rng)
    return ImageSample(sample.id, sample.domain, px, m)
