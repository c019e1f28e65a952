"""Image/mask files and dataset directories.

Layout on disk::

    <root>/images/<id>.ppm|png
    <root>/masks/<id>.pgm|png
    <root>/manifest.csv            (optional: id,split,labeled)

Binary 8-bit PPM (P6) and PGM (P5) are handled natively; PNG goes through
Pillow when it is installed.
"""
from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import DataError
from .types import Dataset, ImageSample

PathLike = Union[str, os.PathLike]

IMAGE_EXTS = (".ppm", ".png")
MASK_EXTS = (".pgm", ".png")
MASK_THRESHOLD = 128


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DataError("truncated PNM header")
    return buf[start:pos], pos


def decode_pnm(buf: bytes) -> np.ndarray:
    """Decode a binary P5/P6 file into uint8 (H x W) or (H x W x 3)."""
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise DataError(f"unsupported PNM variant {magic!r} (only binary P5/P6)")
    try:
        w_tok, pos = _read_token(buf, pos)
        h_tok, pos = _read_token(buf, pos)
        max_tok, pos = _read_token(buf, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError as exc:
        raise DataError(f"malformed PNM header: {exc}") from None
    if maxval != 255:
        raise DataError(f"only 8-bit PNM is supported (maxval {maxval})")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    raster = buf[pos : pos + need]
    if len(raster) != need:
        raise DataError(f"PNM raster truncated: expected {need} bytes, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3).copy()
    return arr.reshape(height, width).copy()


def encode_pnm(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise DataError(f"PNM encoder needs uint8 data, got {arr.dtype}")
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise DataError(f"cannot encode array of shape {arr.shape} as PNM")
    h, w = arr.shape[:2]
    return magic + b"\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr).tobytes()


def read_image_file(path: PathLike) -> np.ndarray:
    path = Path(path)
    ext = path.suffix.lower()
    if ext in (".ppm", ".pgm", ".pnm"):
        return decode_pnm(path.read_bytes())
    if ext == ".png":
        try:
            from PIL import Image
        except ImportError:  # pragma: no cover
            raise DataError("PNG support needs Pillow") from None
        with Image.open(path) as im:
            if im.mode in ("L", "1", "I;16", "I"):
                return np.asarray(im.convert("L"), dtype=np.uint8)
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    raise DataError(f"unsupported image format: {path.name}")


def write_image_file(path: PathLike, arr: np.ndarray) -> None:
    path = Path(path)
    ext = path.suffix.lower()
    if ext in (".ppm", ".pgm", ".pnm"):
        path.write_bytes(encode_pnm(arr))
    elif ext == ".png":
        from PIL import Image

        Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(path)
    else:
        raise DataError(f"unsupported image format: {path.name}")


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32) / np.float32(255.0)


def binarize_mask(gray: np.ndarray, threshold: int = MASK_THRESHOLD) -> np.ndarray:
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must be in [0, 255], got {threshold}")
    return (np.asarray(gray) >= threshold).astype(np.uint8)


def _index_dir(d: Path, exts: tuple[str, ...]) -> dict[str, Path]:
    found: dict[str, Path] = {}
    if not d.is_dir():
        return found
    for p in sorted(d.iterdir()):
        if not p.is_file() or p.name.startswith("."):
            continue
        if p.suffix.lower() not in exts:
            raise DataError(f"unsupported file format: {p}")
        if p.stem in found:
            raise DataError(f"duplicate stem {p.stem!r} in {d}")
        found[p.stem] = p
    return found


def _read_manifest(path: Path) -> dict[str, tuple[str, bool]]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                ident = row["id"].strip()
                split = (row.get("split") or "train").strip()
                labeled = (row.get("labeled") or "1").strip().lower() in ("1", "true", "yes")
            except (KeyError, AttributeError):
                raise DataError(f"malformed manifest row in {path}: {row}") from None
            out[ident] = (split, labeled)
    return out


def load_dataset(
    root: PathLike,
    manifest: Optional[PathLike] = None,
    domain: Optional[str] = None,
    threshold: int = MASK_THRESHOLD,
) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root not found: {root}")
    images = _index_dir(root / "images", IMAGE_EXTS)
    masks = _index_dir(root / "masks", MASK_EXTS)
    if not images:
        raise DataError(f"no images under {root / 'images'}")
    if manifest is None and (root / "manifest.csv").exists():
        manifest = root / "manifest.csv"
    tags = _read_manifest(Path(manifest)) if manifest is not None else {}
    if tags:
        unknown = set(tags) - set(images)
        if unknown:
            raise DataError(f"manifest lists ids without images: {sorted(unknown)[:5]}")
    domain = domain or root.name

    samples, split, labeled = [], [], []
    for ident in sorted(images):
        sp, lab = tags.get(ident, ("train", True))
        rgb = read_image_file(images[ident])
        if rgb.ndim == 2:
            rgb = np.repeat(rgb[:, :, None], 3, axis=2)
        mask = None
        if ident in masks:
            gray = read_image_file(masks[ident])
            if gray.ndim == 3:
                gray = gray.mean(axis=2)
            if gray.shape != rgb.shape[:2]:
                raise DataError(
                    f"{ident}: mask {gray.shape[0]}x{gray.shape[1]} does not match "
                    f"image {rgb.shape[0]}x{rgb.shape[1]}"
                )
            mask = binarize_mask(gray, threshold)
        elif lab:
            raise DataError(f"{ident}: labeled image has no mask in {root / 'masks'}")
        samples.append(ImageSample(ident, domain, from_uint8(rgb), mask))
        split.append(sp)
        labeled.append(lab)
    return Dataset(domain, tuple(samples), tuple(split), tuple(labeled))


def save_dataset(ds: Dataset, root: PathLike, fmt: str = "pnm") -> Path:
    """Write ``ds`` in the directory layout understood by :func:`load_dataset`."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    img_ext, mask_ext = (".ppm", ".pgm") if fmt == "pnm" else (".png", ".png")
    with open(root / "manifest.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["id", "split", "labeled"])
        for s, sp, lab in zip(ds.samples, ds.split, ds.labeled):
            write_image_file(root / "images" / f"{s.id}{img_ext}", to_uint8(s.pixels))
            if s.mask is not None:
                write_image_file(root / "masks" / f"{s.id}{mask_ext}", s.mask * np.uint8(255))
            wr.writerow([s.id, sp, int(lab)])
    return root
