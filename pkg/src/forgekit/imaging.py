"""Pixel-level primitives: blending, convex-hull masks, mask deformation, I/O.

Conventions used throughout the package:

* an image is a float64 ndarray, shape ``(H, W)`` or ``(H, W, 3)``, values
  in ``[0, 1]``; math happens in double precision, 8-bit only at file
  boundaries;
* a soft mask is a float64 ndarray, shape ``(H, W)``, values in ``[0, 1]``;
* a landmark set is a float64 ndarray, shape ``(68, 2)``, columns ``(x, y)``
  in pixel coordinates.

All functions are pure; randomness enters only through explicitly passed
seeded streams (see :mod:`forgekit.rng`).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .errors import (DataError, DegenerateGeometryError, DimensionError,
                     DomainError)
from .rng import as_generator

N_LANDMARKS = 68


# ---------------------------------------------------------------------------
# validation helpers

def validate_image(img: np.ndarray) -> np.ndarray:
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3)):
        raise DimensionError(f"image must be (H,W) or (H,W,1|3), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DataError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise DataError("image values must lie in [0, 1]")
    return img


def validate_mask(mask: np.ndarray) -> np.ndarray:
    if mask.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.all(np.isfinite(mask)) or mask.min() < 0.0 or mask.max() > 1.0:
        raise DataError("mask values must lie in [0, 1]")
    return mask


def validate_landmarks(points: np.ndarray, height: int | None = None,
                       width: int | None = None) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (N_LANDMARKS, 2):
        raise DataError(f"expected {N_LANDMARKS} (x, y) landmarks, got shape {points.shape}")
    if height is not None and width is not None:
        x, y = points[:, 0], points[:, 1]
        if x.min() < 0 or y.min() < 0 or x.max() > width - 1 or y.max() > height - 1:
            raise DataError("landmarks fall outside image bounds")
    return points


# ---------------------------------------------------------------------------
# blending

def blend(foreground: np.ndarray, background: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-pixel convex combination: ``m*fg + (1-m)*bg``.

    ``mask`` is broadcast across channels when the images carry a channel axis.
    """
    if foreground.shape != background.shape:
        raise DimensionError(
            f"foreground {foreground.shape} and background {background.shape} differ")
    if mask.shape != foreground.shape[:2]:
        raise DimensionError(
            f"mask {mask.shape} does not match image spatial dims {foreground.shape[:2]}")
    m = mask if foreground.ndim == 2 else mask[:, :, None]
    out = m * foreground + (1.0 - m) * background
    # rounding can push a hair past the endpoints even for in-range inputs
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# convex-hull rasterization

def convex_hull_mask(points: np.ndarray, height: int, width: int) -> np.ndarray:
    """Binary mask, 1 at pixel centers inside (or on) the hull of ``points``.

    ``points`` are ``(x, y)`` pairs; at least 3 non-collinear points are
    required. The boundary is inclusive: a pixel center lying exactly on a
    hull edge is inside.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise DegenerateGeometryError(f"need >=3 points for a hull, got {pts.shape[0]}")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateGeometryError(f"degenerate point set (collinear?): {exc}") from exc

    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    # hull.equations rows are (a, b, c) with a*x + b*y + c <= 0 inside
    inside = np.ones((height, width), dtype=bool)
    for a, b, c in hull.equations:
        inside &= (a * gx + b * gy + c) <= 1e-9
    return inside.astype(np.float64)


# ---------------------------------------------------------------------------
# mask deformation

@dataclass
class DeformParams:
    """Magnitudes for the hull-mask deformation chain.

    affine_jitter: relative translation/scale bound and rotation bound (rad).
    elastic_amp:   std-dev of the smoothed displacement field, in pixels.
    elastic_sigma: Gaussian smoothing of the raw displacement field, pixels.
    blur_radius:   Gaussian blur sigma applied last, in pixels.

    All-zero parameters make :func:`deform_mask` the exact identity.
    """

    affine_jitter: float = 0.02
    elastic_amp: float = 2.0
    elastic_sigma: float = 6.0
    blur_radius: float = 0.8

    @staticmethod
    def identity() -> "DeformParams":
        return DeformParams(0.0, 0.0, 0.0, 0.0)


def _affine_warp(mask: np.ndarray, jitter: float, rng: np.random.Generator) -> np.ndarray:
    h, w = mask.shape
    angle = rng.uniform(-jitter, jitter)
    scale = 1.0 + rng.uniform(-jitter, jitter)
    tx = rng.uniform(-jitter, jitter) * w
    ty = rng.uniform(-jitter, jitter) * h
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    # inverse map: rotate/scale about the center, then translate
    ux, uy = gx - cx - tx, gy - cy - ty
    src_x = (cos_a * ux + sin_a * uy) / scale + cx
    src_y = (-sin_a * ux + cos_a * uy) / scale + cy
    return ndimage.map_coordinates(mask, [src_y, src_x], order=1, mode="constant", cval=0.0)


def _elastic_warp(mask: np.ndarray, amp: float, sigma: float,
                  rng: np.random.Generator) -> np.ndarray:
    h, w = mask.shape
    dx = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma)
    dy = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma)
    # smoothing shrinks the field; rescale so the displacement std is `amp`
    dx *= amp / max(dx.std(), 1e-12)
    dy *= amp / max(dy.std(), 1e-12)
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(mask, [gy + dy, gx + dx], order=1,
                                   mode="constant", cval=0.0)


def deform_mask(mask: np.ndarray, params: DeformParams, rng) -> np.ndarray:
    """Affine jitter, then elastic displacement, then Gaussian blur.

    Deterministic for a given ``(params, rng seed)``; the blur produces the
    soft transition band the boundary-mask construction relies on.
    """
    validate_mask(mask)
    gen = as_generator(rng)
    out = mask
    if params.affine_jitter > 0.0:
        out = _affine_warp(out, params.affine_jitter, gen)
    if params.elastic_amp > 0.0:
        out = _elastic_warp(out, params.elastic_amp, params.elastic_sigma, gen)
    if params.blur_radius > 0.0:
        out = ndimage.gaussian_filter(out, params.blur_radius)
    if out is mask:
        return mask.copy()
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# resizing (shared by synthesis and evaluation)

def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize onto pixel centers; channels handled independently."""
    if out_h <= 0 or out_w <= 0:
        raise DomainError("output size must be positive")
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    gy, gx = np.meshgrid(np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1), indexing="ij")
    if img.ndim == 2:
        return ndimage.map_coordinates(img, [gy, gx], order=1, mode="nearest")
    chans = [ndimage.map_coordinates(img[:, :, c], [gy, gx], order=1, mode="nearest")
             for c in range(img.shape[2])]
    return np.stack(chans, axis=2)


# ---------------------------------------------------------------------------
# file I/O (PNG images, JSON/CSV landmarks)

def load_image(path: str | os.PathLike) -> np.ndarray:
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr


def save_image(path: str | os.PathLike, img: np.ndarray) -> None:
    validate_image(img)
    arr = np.round(img * 255.0).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    PILImage.fromarray(arr).save(path, format="PNG")


def load_landmarks(path: str | os.PathLike) -> np.ndarray:
    """68 (x, y) pairs from a JSON array or a two-column CSV."""
    path = os.fspath(path)
    try:
        if path.endswith(".json"):
            with open(path, "r", encoding="utf-8") as fh:
                pts = np.asarray(json.load(fh), dtype=np.float64)
        else:
            pts = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read landmarks {path}: {exc}") from exc
    return validate_landmarks(pts)


def save_landmarks(path: str | os.PathLike, points: np.ndarray) -> None:
    points = validate_landmarks(points)
    path = os.fspath(path)
    if path.endswith(".json"):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([[float(x), float(y)] for x, y in points], fh)
    else:
        np.savetxt(path, points, delimiter=",", fmt="%.6f")
