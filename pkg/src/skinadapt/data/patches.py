from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError
from .types import ImageSample

PAPER_PATCH_SIZE = 35
PAPER_PATCHES_PER_IMAGE = 512


class PatchSet(NamedTuple):
    patches: np.ndarray  # N x s x s x 3
    labels: np.ndarray  # N, {0, 1}
    centers: np.ndarray  # N x 2, (row, col)

    def __len__(self):
        return len(self.labels)


def valid_centers(shape: tuple[int, int], size: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column ranges of centers whose full patch lies inside the image."""
    r = size // 2
    h, w = shape
    return np.arange(r, h - r), np.arange(r, w - r)


def patch_at(pixels: np.ndarray, row: int, col: int, size: int) -> np.ndarray:
    r = size // 2
    return pixels[row - r : row + r + 1, col - r : col + r + 1]


def _check_size(size: int) -> None:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"patch size must be a positive odd integer, got {size}")


def extract_training_patches(
    sample: ImageSample,
    n: int = PAPER_PATCHES_PER_IMAGE,
    size: int = PAPER_PATCH_SIZE,
    seed: int = 0,
    balanced: bool = False,
) -> PatchSet:
    """Draw ``n`` random patches whose centers keep the whole patch in-image.

    Centers are uniform over the valid positions (with replacement when there
    are fewer than ``n`` of them). ``balanced=True`` draws half of the centers
    from each class when both are present.
    """
    _check_size(size)
    if n < 1:
        raise ValueError("n must be >= 1")
    if sample.mask is None:
        raise DataError(f"{sample.id}: patch extraction needs a labeled sample")
    h, w = sample.shape
    if h < size or w < size:
        raise DataError(f"{sample.id}: image {h}x{w} smaller than patch {size}x{size}")
    rows, cols = valid_centers((h, w), size)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    rr, cc = rr.ravel(), cc.ravel()
    rng = np.random.default_rng(seed)

    if balanced:
        lab = sample.mask[rr, cc]
        pos, neg = np.flatnonzero(lab == 1), np.flatnonzero(lab == 0)
        if len(pos) and len(neg):
            n_pos = n // 2
            pick = np.concatenate(
                [
                    rng.choice(pos, n_pos, replace=len(pos) < n_pos),
                    rng.choice(neg, n - n_pos, replace=len(neg) < n - n_pos),
                ]
            )
        else:
            pick = rng.choice(len(rr), n, replace=len(rr) < n)
    else:
        pick = rng.choice(len(rr), n, replace=len(rr) < n)

    centers = np.stack([rr[pick], cc[pick]], axis=1)
    windows = sliding_window_view(sample.pixels, (size, size), axis=(0, 1))
    r = size // 2
    # windows[i, j] is the patch whose top-left corner is (i, j): H' x W' x 3 x s x s
    patches = windows[centers[:, 0] - r, centers[:, 1] - r].transpose(0, 2, 3, 1)
    labels = sample.mask[centers[:, 0], centers[:, 1]].astype(np.uint8)
    return PatchSet(np.ascontiguousarray(patches), labels, centers)


def sliding_patches(pixels: np.ndarray, size: int):
    """All valid patches of an image as a lazy (H', W', s, s, 3) view."""
    _check_size(size)
    h, w = pixels.shape[:2]
    if h < size or w < size:
        raise DataError(f"image {h}x{w} smaller than patch {size}x{size}")
    return sliding_window_view(pixels, (size, size), axis=(0, 1)).transpose(0, 1, 3, 4, 2)
