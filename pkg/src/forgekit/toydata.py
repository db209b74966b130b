"""Procedural textured images with synthetic facial landmark layouts.

Stand-ins for real face crops in demos and end-to-end tests: smooth random
textures plus a 68-point landmark set arranged like a face (jaw arc, brows,
eyes, nose, mouth), so the hull-mask machinery sees realistic geometry.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import save_image, save_landmarks
from .rng import generator_from_seed, split_seed


def texture_image(size: int, rng: np.random.Generator, channels: int = 3) -> np.ndarray:
    """Smooth random field in [0, 1]; low-frequency so blending seams stand out."""
    sigma = rng.uniform(4.0, 7.0)
    base = ndimage.gaussian_filter(rng.standard_normal((size, size, channels)),
                                   (sigma, sigma, 0))
    base = (base - base.mean()) / max(base.std(), 1e-9)
    mean = rng.uniform(0.4, 0.6)
    return np.clip(mean + 0.13 * base, 0.0, 1.0)


def face_landmarks(size: int, rng: np.random.Generator) -> np.ndarray:
    """68 (x, y) points laid out like a face, with mild per-point jitter."""
    cx = size / 2 + rng.uniform(-0.03, 0.03) * size
    cy = size / 2 + rng.uniform(-0.03, 0.03) * size
    rx = size * rng.uniform(0.26, 0.32)
    ry = size * rng.uniform(0.3, 0.36)

    pts = []
    # jaw: right ear -> chin -> left ear (y axis points down)
    for phi in np.linspace(-0.15, np.pi + 0.15, 17):
        pts.append((cx + rx * np.cos(phi), cy + ry * np.sin(phi)))
    # eyebrows
    for side in (-1, 1):
        for t in np.linspace(0.25, 0.75, 5):
            pts.append((cx + side * rx * t, cy - ry * 0.55))
    # nose bridge + base
    for t in np.linspace(-0.35, 0.1, 4):
        pts.append((cx, cy + ry * t))
    for t in np.linspace(-0.3, 0.3, 5):
        pts.append((cx + rx * t * 0.5, cy + ry * 0.18))
    # eyes
    for side in (-1, 1):
        ex = cx + side * rx * 0.45
        ey = cy - ry * 0.3
        for k in range(6):
            ang = 2 * np.pi * k / 6
            pts.append((ex + rx * 0.14 * np.cos(ang), ey + ry * 0.07 * np.sin(ang)))
    # mouth: outer 12 + inner 8
    my = cy + ry * 0.5
    for k in range(12):
        ang = 2 * np.pi * k / 12
        pts.append((cx + rx * 0.35 * np.cos(ang), my + ry * 0.12 * np.sin(ang)))
    for k in range(8):
        ang = 2 * np.pi * k / 8
        pts.append((cx + rx * 0.2 * np.cos(ang), my + ry * 0.06 * np.sin(ang)))

    arr = np.array(pts, dtype=np.float64)
    arr += rng.normal(0.0, 0.004 * size, size=arr.shape)
    return np.clip(arr, 1.0, size - 2.0)


def write_toy_corpus(out_dir: str | os.PathLike, count: int, size: int,
                     seed: int) -> tuple[Path, Path]:
    """PNG images plus JSON landmark files; returns (image_dir, landmark_dir)."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    landmark_dir = out_dir / "landmarks"
    image_dir.mkdir(parents=True, exist_ok=True)
    landmark_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        rng = generator_from_seed(split_seed(seed, i))
        name = f"toy_{i:04d}"
        save_image(image_dir / f"{name}.png", texture_image(size, rng))
        save_landmarks(landmark_dir / f"{name}.json", face_landmarks(size, rng))
    return image_dir, landmark_dir
