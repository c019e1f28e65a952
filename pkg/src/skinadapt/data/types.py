from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import DataError

SPLITS = ("train", "test")


@dataclass(frozen=True, eq=False)
class ImageSample:
    """RGB image in [0, 1] (H x W x 3, float32) with an optional binary mask."""

    id: str
    domain: str
    pixels: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"{self.id}: pixels must be HxWx3, got {px.shape}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0 or not np.isfinite(px).all()):
            raise DataError(f"{self.id}: pixel values outside [0, 1]")
        object.__setattr__(self, "pixels", px)
        if self.mask is not None:
            m = np.asarray(self.mask)
            if m.shape != px.shape[:2]:
                raise DataError(
                    f"{self.id}: mask shape {m.shape} does not match image {px.shape[:2]}"
                )
            if not np.isin(m, (0, 1)).all():
                raise DataError(f"{self.id}: mask must contain only 0 and 1")
            object.__setattr__(self, "mask", m.astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]

    def with_mask(self, mask: Optional[np.ndarray]) -> "ImageSample":
        return replace(self, mask=mask)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered samples of one domain plus per-sample split and labeled flags.

    ``labeled[i] == False`` hides the mask of sample i from training; the mask
    itself is kept so the test harness can still score against it.
    """

    domain: str
    samples: tuple[ImageSample, ...]
    split: tuple[str, ...] = ()
    labeled: tuple[bool, ...] = ()

    def __post_init__(self):
        samples = tuple(self.samples)
        n = len(samples)
        split = tuple(self.split) if self.split else ("train",) * n
        labeled = tuple(bool(x) for x in self.labeled) if self.labeled else tuple(
            s.mask is not None for s in samples
        )
        if len(split) != n or len(labeled) != n:
            raise DataError("split/labeled tags must have one entry per sample")
        bad = set(split) - set(SPLITS)
        if bad:
            raise DataError(f"unknown split tag(s): {sorted(bad)}")
        for s, lab in zip(samples, labeled):
            if lab and s.mask is None:
                raise DataError(f"{s.id}: marked labeled but has no mask")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "labeled", labeled)

    def __len__(self) -> int:
        return len(self.samples)

    def indices(self, split: str, labeled: Optional[bool] = None) -> list[int]:
        return [
            i
            for i, (sp, lab) in enumerate(zip(self.split, self.labeled))
            if sp == split and (labeled is None or lab == labeled)
        ]

    def subset(self, split: str, labeled: Optional[bool] = None) -> list[ImageSample]:
        return [self.samples[i] for i in self.indices(split, labeled)]

    def training_view(self) -> list[ImageSample]:
        """Train-split samples with masks stripped from the unlabeled ones."""
        out = []
        for i in self.indices("train"):
            s = self.samples[i]
            out.append(s if self.labeled[i] else s.with_mask(None))
        return out

    def replace(self, **changes) -> "Dataset":
        return replace(self, **changes)


def validate_unit_range(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class FrameTransform:
    original_size: tuple[int, int]
    frame_size: tuple[int, int]
    scale: float
    offsets: tuple[int, int]

    @property
    def inner_size(self) -> tuple[int, int]:
        """Size of the (possibly resized) image inside the frame."""
        if self.scale == 1.0:
            return self.original_size
        h, w = self.original_size
        hf, wf = self.frame_size
        return (
            min(hf, max(1, int(round(h * self.scale)))),
            min(wf, max(1, int(round(w * self.scale)))),
        )


@dataclass(frozen=True)
class AugmentConfig:
    hue: float = 0.03
    saturation: float = 0.15
    value: float = 0.15
    max_shift: float = 0.10
    flip_prob: float = 0.5
    hsv_enabled: bool = True
    shift_enabled: bool = True
    flip_enabled: bool = True

    def __post_init__(self):
        for name in ("hue", "saturation", "value"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} jitter range must be non-negative")
        validate_unit_range("flip_prob", self.flip_prob)
        validate_unit_range("max_shift", self.max_shift)

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, False, False, False)

