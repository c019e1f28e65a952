"""Fit arbitrary images into a fixed network input frame and back.

Images that fit are zero-padded and centered; larger ones are shrunk
(aspect preserved) until they fit, then centered.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import DataError
from .types import FrameTransform, ImageSample


def resize(arr: np.ndarray, size: tuple[int, int], mode: str = "bilinear") -> np.ndarray:
    """Resize an H x W or H x W x C array. ``mode`` is "bilinear" or "nearest"."""
    arr = np.asarray(arr)
    if arr.shape[:2] == tuple(size):
        return arr.copy()
    squeeze = arr.ndim == 2
    x = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))
    x = x[None, None] if squeeze else x.permute(2, 0, 1)[None]
    if mode == "bilinear":
        y = F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)
    elif mode == "nearest":
        y = F.interpolate(x, size=tuple(size), mode="nearest-exact")
    else:
        raise ValueError(f"unknown resize mode {mode!r}")
    y = y[0, 0] if squeeze else y[0].permute(1, 2, 0)
    return y.numpy().astype(arr.dtype if mode == "nearest" else np.float32)


def make_transform(size: tuple[int, int], frame: tuple[int, int]) -> FrameTransform:
    h, w = size
    hf, wf = frame
    if hf <= 0 or wf <= 0:
        raise ValueError(f"frame dims must be positive, got {frame}")
    scale = 1.0 if (h <= hf and w <= wf) else min(hf / h, wf / w)
    t = FrameTransform((h, w), (hf, wf), scale, (0, 0))
    ih, iw = t.inner_size
    return FrameTransform((h, w), (hf, wf), scale, ((hf - ih) // 2, (wf - iw) // 2))


def _place(arr: np.ndarray, t: FrameTransform, mode: str) -> np.ndarray:
    ih, iw = t.inner_size
    inner = resize(arr, (ih, iw), mode) if t.scale != 1.0 else arr
    out = np.zeros(tuple(t.frame_size) + arr.shape[2:], dtype=inner.dtype)
    oy, ox = t.offsets
    out[oy : oy + ih, ox : ox + iw] = inner
    return out


def frame_image(img: ImageSample | np.ndarray, frame: tuple[int, int]):
    """Return (framed H_f x W_f x 3 pixels, FrameTransform)."""
    pixels = img.pixels if isinstance(img, ImageSample) else np.asarray(img, dtype=np.float32)
    t = make_transform(pixels.shape[:2], frame)
    return np.clip(_place(pixels, t, "bilinear"), 0.0, 1.0), t


def frame_mask(mask: np.ndarray, t: FrameTransform) -> np.ndarray:
    """Frame a binary mask with the geometry of ``t`` (nearest neighbour)."""
    if tuple(mask.shape) != tuple(t.original_size):
        raise DataError(f"mask shape {mask.shape} != transform original size {t.original_size}")
    return _place(np.asarray(mask, dtype=np.uint8), t, "nearest")


def unframe_prediction(pred: np.ndarray, t: FrameTransform, mode: str = "bilinear") -> np.ndarray:
    pred = np.asarray(pred)
    if tuple(pred.shape[:2]) != tuple(t.frame_size):
        raise DataError(f"prediction shape {pred.shape} != frame size {t.frame_size}")
    oy, ox = t.offsets
    ih, iw = t.inner_size
    crop = pred[oy : oy + ih, ox : ox + iw]
    if t.scale == 1.0:
        return crop.copy()
    out = resize(crop, t.original_size, mode)
    return np.clip(out, 0.0, 1.0) if mode == "bilinear" else out
