"""Synthetic skin-like segmentation domains with exact ground truth.

A domain is described by colour distributions for foreground ("skin") and
background, a shape family and a noise level. Two descriptors that differ
only in their colour statistics share the feature space but not the input
distribution, which is the homogeneous shift the adaptation code targets.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .io import from_uint8, to_uint8
from .types import Dataset, ImageSample

SHAPES = ("ellipse", "rect", "mixed")


@dataclass(frozen=True)
class DomainDescriptor:
    name: str
    fg_mean: Sequence[float] = (0.80, 0.55, 0.45)
    fg_cov: Sequence[Sequence[float]] = ((0.004, 0, 0), (0, 0.004, 0), (0, 0, 0.004))
    bg_mean: Sequence[float] = (0.35, 0.40, 0.45)
    bg_cov: Sequence[Sequence[float]] = ((0.02, 0, 0), (0, 0.02, 0), (0, 0, 0.02))
    shape: str = "ellipse"
    count_range: tuple[int, int] = (1, 3)
    # blob radius as a fraction of min(H, W)
    size_range: tuple[float, float] = (0.10, 0.25)
    noise: float = 0.02
    placement: str = "random"
    # per-blob colour variation around the blob's base colour (texture)
    texture: float = 0.0
    distractor_mean: Optional[Sequence[float]] = None
    distractor_cov: Optional[Sequence[Sequence[float]]] = None
    distractor_range: tuple[int, int] = (0, 0)
    gradient: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        if self.placement not in ("random", "center"):
            raise ValueError("placement must be 'random' or 'center'")
        lo, hi = self.count_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad count_range {self.count_range}")
        if self.noise < 0 or self.texture < 0 or self.gradient < 0:
            raise ValueError("noise, texture and gradient must be non-negative")
        for label, mean, cov in self._distributions():
            _cholesky(label, mean, cov)

    def _distributions(self):
        yield "foreground", self.fg_mean, self.fg_cov
        yield "background", self.bg_mean, self.bg_cov
        if self.distractor_mean is not None:
            yield "distractor", self.distractor_mean, self.distractor_cov

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainDescriptor":
        d = dict(d)
        for key in ("count_range", "size_range", "distractor_range"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("fg_mean", "bg_mean", "distractor_mean"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        for key in ("fg_cov", "bg_cov", "distractor_cov"):
            if d.get(key) is not None:
                d[key] = tuple(tuple(r) for r in d[key])
        return cls(**d)


def _cholesky(label: str, mean, cov) -> np.ndarray:
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if mean.shape != (3,) or cov.shape != (3, 3):
        raise ValueError(f"{label}: mean must have 3 entries and covariance be 3x3")
    if not np.allclose(cov, cov.T):
        raise ValueError(f"{label}: covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError(f"{label}: degenerate (not positive definite) covariance") from None


def ellipse_mask(shape, center, radii, angle: float = 0.0) -> np.ndarray:
    """Pixels whose centers fall inside the (rotated) ellipse."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = (dx * c + dy * s) / radii[1]
    v = (-dx * s + dy * c) / radii[0]
    return (u * u + v * v <= 1.0).astype(np.uint8)


def rect_mask(shape, center, half, angle: float = 0.0) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return ((np.abs(u) <= half[1]) & (np.abs(v) <= half[0])).astype(np.uint8)


def _colour(rng, mean, chol) -> np.ndarray:
    return np.clip(np.asarray(mean) + chol @ rng.standard_normal(3), 0.0, 1.0)


def _blob(rng, d: DomainDescriptor, shape, kind: str, centered: bool) -> np.ndarray:
    h, w = shape
    m = min(h, w)
    ry = rng.uniform(*d.size_range) * m
    rx = rng.uniform(*d.size_range) * m
    if centered:
        center, angle = ((h - 1) / 2.0, (w - 1) / 2.0), 0.0
    else:
        center = (rng.uniform(0.15, 0.85) * (h - 1), rng.uniform(0.15, 0.85) * (w - 1))
        angle = rng.uniform(0, np.pi)
    if kind == "ellipse":
        return ellipse_mask(shape, center, (ry, rx), angle)
    return rect_mask(shape, center, (ry, rx), angle)


def render_image(d: DomainDescriptor, shape, rng: np.random.Generator):
    """Render one (pixels, mask) pair; pixels are quantized to the 8-bit grid."""
    h, w = shape
    fg_chol = _cholesky("foreground", d.fg_mean, d.fg_cov)
    bg_chol = _cholesky("background", d.bg_mean, d.bg_cov)
    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = _colour(rng, d.bg_mean, bg_chol)
    if d.gradient:
        ramp = np.linspace(-1.0, 1.0, w)[None, :, None] * rng.uniform(-d.gradient, d.gradient)
        img = img + ramp

    if d.distractor_mean is not None:
        dchol = _cholesky("distractor", d.distractor_mean, d.distractor_cov)
        for _ in range(rng.integers(d.distractor_range[0], d.distractor_range[1] + 1)):
            kind = "rect" if d.shape == "mixed" and rng.random() < 0.5 else "ellipse"
            region = _blob(rng, d, shape, kind, False).astype(bool)
            img[region] = _colour(rng, d.distractor_mean, dchol)

    mask = np.zeros((h, w), dtype=np.uint8)
    n_blobs = rng.integers(d.count_range[0], d.count_range[1] + 1)
    for _ in range(n_blobs):
        kind = d.shape if d.shape != "mixed" else ("ellipse" if rng.random() < 0.5 else "rect")
        region = _blob(rng, d, shape, kind, d.placement == "center").astype(bool)
        base = _colour(rng, d.fg_mean, fg_chol)
        if d.texture:
            yy, xx = np.mgrid[0:h, 0:w]
            phase = rng.uniform(0, 2 * np.pi, 2)
            wave = np.sin(yy / 3.0 + phase[0]) * np.cos(xx / 4.0 + phase[1])
            img[region] = base + d.texture * wave[region][:, None]
        else:
            img[region] = base
        mask |= region.astype(np.uint8)

    if d.noise:
        img = img + rng.normal(0.0, d.noise, img.shape)
    return from_uint8(to_uint8(np.clip(img, 0.0, 1.0))), mask


def make_synthetic_domain(
    d: DomainDescriptor, n: int, size: tuple[int, int] = (64, 64), seed: int = 0
) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        px, mask = render_image(d, size, rng)
        samples.append(ImageSample(f"{d.name}_{i:04d}", d.name, px, mask))
    return Dataset(d.name, tuple(samples))


def _iso(var: float) -> tuple:
    return ((var, 0.0, 0.0), (0.0, var, 0.0), (0.0, 0.0, var))


# Built-in domains. "diverse" plays the broad source (many tones, cluttered
# backgrounds, Compaq-like); "specific" is a narrow, shifted target (SFA-like).
PRESETS: dict[str, DomainDescriptor] = {
    "diverse": DomainDescriptor(
        name="diverse",
        fg_mean=(0.78, 0.55, 0.45),
        fg_cov=_iso(0.006),
        bg_mean=(0.40, 0.42, 0.45),
        bg_cov=_iso(0.03),
        shape="mixed",
        count_range=(1, 3),
        noise=0.03,
    ),
    "specific": DomainDescriptor(
        name="specific",
        fg_mean=(0.70, 0.50, 0.38),
        fg_cov=_iso(0.002),
        bg_mean=(0.30, 0.35, 0.40),
        bg_cov=_iso(0.003),
        shape="ellipse",
        count_range=(1, 2),
        noise=0.08,
    ),
}


# Seeds of the reference diverse -> specific pair used by the acceptance runs.
REFERENCE_PAIR = {
    "source": ("diverse", 40, 11, 2),  # preset, n, generation seed, split seed
    "target": ("specific", 100, 13, 4),
    "size": (64, 64),
    "test_fraction": 0.15,
    "train_seed": 1,
}


def reference_pair(size=None) -> tuple[Dataset, Dataset]:
    """The shipped source/target pair, already split into train/test."""
    from .split import split_dataset

    ref = REFERENCE_PAIR
    size = size or ref["size"]
    out = []
    for role in ("source", "target"):
        preset, n, seed, split_seed = ref[role]
        ds = make_synthetic_domain(PRESETS[preset], n, size, seed=seed)
        out.append(split_dataset(ds, ref["test_fraction"], seed=split_seed))
    return out[0], out[1]
