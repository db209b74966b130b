"""Ground-truth targets for the attention branches.

From a soft blending mask ``m`` we derive:

* a boundary mask ``b = 4*m*(1-m)`` peaking where foreground and background
  contribute equally (all zeros for genuine images);
* the vulnerable-point set: every pixel attaining ``max(b)`` exactly;
* a heatmap placing an unnormalized Gaussian at each vulnerable point, with
  the standard deviation adapted to the local extent of the boundary band;
* a consistency map ``c = 1 - |b_anchor - b|`` against one randomly chosen
  vulnerable point (all ones for genuine images).
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image as PILImage

from .errors import ContractViolationError, DataError, DomainError
from .rng import as_generator

POSITIVE_EPS = 1e-6      # boundary values above this count as part of the band
DEFAULT_IOU_THRESHOLD = 0.7
MIN_RADIUS = 1.0         # keeps sigma >= 1/3 px on degenerate one-pixel bands


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """``4*m*(1-m)``: 0 at pure foreground/background, 1 where m == 0.5."""
    return 4.0 * mask * (1.0 - mask)


def real_boundary(height: int, width: int) -> np.ndarray:
    """Boundary target for a genuine image: all zeros."""
    return np.zeros((height, width), dtype=np.float64)


def vulnerable_points(boundary: np.ndarray) -> np.ndarray:
    """All (i, j) where the boundary attains its maximum, exact float equality.

    Empty (0, 2) array when ``max(boundary) == 0`` (genuine image).
    """
    mx = boundary.max() if boundary.size else 0.0
    if mx == 0.0:
        return np.empty((0, 2), dtype=np.int64)
    return np.argwhere(boundary == mx).astype(np.int64)


def gaussian_radius(box_height: float, box_width: float,
                    iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> float:
    """Largest corner displacement keeping IoU with an h*w box above threshold.

    Three worst cases are solved in closed form and the tightest wins:
    the box shifted diagonally by r, shrunk by r on both corners, or grown
    by r on both corners. Each reduces to a quadratic in r; the roots below
    are the exact solutions (validated against a brute-force IoU sweep in
    the test suite).
    """
    if box_height <= 0 or box_width <= 0:
        raise DomainError(f"box dims must be positive, got {box_height}x{box_width}")
    if not 0.0 < iou_threshold < 1.0:
        raise DomainError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    h, w, t = float(box_height), float(box_width), float(iou_threshold)

    # shifted: (w-r)(h-r) / (2wh - (w-r)(h-r)) >= t
    b1 = h + w
    c1 = w * h * (1.0 - t) / (1.0 + t)
    r1 = (b1 - np.sqrt(b1 * b1 - 4.0 * c1)) / 2.0

    # shrunk: (w-2r)(h-2r) / (wh) >= t
    a2 = 4.0
    b2 = 2.0 * (h + w)
    c2 = (1.0 - t) * w * h
    r2 = (b2 - np.sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2)

    # grown: wh / ((w+2r)(h+2r)) >= t
    a3 = 4.0 * t
    b3 = -2.0 * t * (h + w)
    c3 = (t - 1.0) * w * h
    r3 = (-b3 + np.sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3)

    return float(min(r1, r2, r3))


def boundary_extent(boundary: np.ndarray, point: tuple[int, int],
                    eps: float = POSITIVE_EPS) -> tuple[int, int]:
    """Run length of strictly-positive boundary through ``point``.

    Returns (height, width): the vertical and horizontal extent of the band
    at that pixel, each at least 1.
    """
    i, j = int(point[0]), int(point[1])
    col = boundary[:, j] > eps
    row = boundary[i, :] > eps
    if not col[i] or not row[j]:
        raise ContractViolationError(f"point {point} is not inside the positive band")

    def _run(line: np.ndarray, k: int) -> int:
        lo = k
        while lo > 0 and line[lo - 1]:
            lo -= 1
        hi = k
        while hi + 1 < line.shape[0] and line[hi + 1]:
            hi += 1
        return hi - lo + 1

    return _run(col, i), _run(row, j)


def heatmap_gt(points: np.ndarray, boundary: np.ndarray,
               iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> np.ndarray:
    """Superimpose (elementwise max) one adaptive Gaussian per vulnerable point.

    For each point the band extent defines a virtual box, the box the
    displacement radius, and ``sigma = max(radius, 1)/3``. The peak value at
    every vulnerable point is exactly 1.
    """
    h, w = boundary.shape
    heat = np.zeros((h, w), dtype=np.float64)
    if len(points) == 0:
        return heat
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    for pi, pj in np.asarray(points):
        box_h, box_w = boundary_extent(boundary, (pi, pj))
        radius = max(gaussian_radius(box_h, box_w, iou_threshold), MIN_RADIUS)
        sigma = radius / 3.0
        g = np.exp(-((gy - pi) ** 2 + (gx - pj) ** 2) / (2.0 * sigma * sigma))
        np.maximum(heat, g, out=heat)
    return heat


def real_heatmap(height: int, width: int) -> np.ndarray:
    return np.zeros((height, width), dtype=np.float64)


def select_anchor(points: np.ndarray, rng) -> tuple[int, int]:
    """Uniformly pick one vulnerable point with the sample's seeded stream."""
    if len(points) == 0:
        raise ContractViolationError("cannot select an anchor from an empty point set")
    gen = as_generator(rng)
    k = int(gen.integers(0, len(points)))
    return int(points[k][0]), int(points[k][1])


def consistency_gt(boundary: np.ndarray, anchor: tuple[int, int] | None = None,
                   is_real: bool = False) -> np.ndarray:
    """``1 - |b_anchor - b|`` against the chosen vulnerable point.

    Genuine images (and fakes whose boundary is identically zero) get the
    all-ones map; otherwise the anchor must be a member of the vulnerable
    set of ``boundary``.
    """
    if is_real or boundary.max() == 0.0:
        return np.ones_like(boundary)
    if anchor is None:
        raise ContractViolationError("anchor required for a non-zero boundary")
    i, j = int(anchor[0]), int(anchor[1])
    if boundary[i, j] != boundary.max():
        raise ContractViolationError(f"anchor {anchor} is not a vulnerable point")
    return 1.0 - np.abs(boundary[i, j] - boundary)


# ---------------------------------------------------------------------------
# map persistence: lossless float64 blob, and 16-bit PNG (documented lossy)

MAP_MAGIC = b"FKMAP001"


def write_map_blob(path: str | os.PathLike, arr: np.ndarray) -> None:
    """8-byte magic, u32 height, u32 width (LE), then row-major float64 LE."""
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"map blobs store 2-D arrays, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f8").tobytes())


def read_map_blob(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAP_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        h, w = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * h * w), dtype="<f8")
    if data.size != h * w:
        raise DataError(f"{path}: truncated payload")
    return data.reshape(h, w).astype(np.float64)


def write_map_png16(path: str | os.PathLike, arr: np.ndarray) -> None:
    """Quantized to 16 bits (value*65535); convenient for inspection."""
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DataError("16-bit PNG maps require values in [0, 1]")
    q = np.round(arr * 65535.0).astype(np.uint16)
    PILImage.fromarray(q, mode="I;16").save(path, format="PNG")


def read_map_png16(path: str | os.PathLike) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    return arr / 65535.0
