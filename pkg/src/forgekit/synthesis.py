"""Pseudo-fake synthesis and manifest-driven dataset assembly.

Two recipes produce fakes from genuine images only:

* ``bi``  - cross-image blending: the record's face is pasted onto a partner
  image through its deformed hull mask;
* ``sbi`` - self-blending: source and target views of the same image get
  independent photometric/geometric jitter before blending, leaving only a
  soft seam as the artifact.

Every stochastic choice flows from the record's 64-bit seed, so regenerating
from a manifest is bit-identical no matter the order or parallelism.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import ConfigError, DataError, EmptyInputError
from .imaging import (DeformParams, blend, convex_hull_mask, deform_mask,
                      load_image, load_landmarks, resize_bilinear,
                      validate_image, validate_landmarks)
from .labels import (boundary_mask, consistency_gt, heatmap_gt, select_anchor,
                     vulnerable_points)
from .rng import as_generator, split_seed

RECIPES = ("real", "bi", "sbi")


@dataclass
class SampleRecord:
    image_path: str
    landmark_path: str
    recipe: str
    partner_path: str | None
    seed: int
    label: int

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise DataError(f"unknown recipe {self.recipe!r}")
        if self.recipe == "bi" and not self.partner_path:
            raise DataError("bi records require a partner_path")
        if (self.label == 1) != (self.recipe != "real"):
            raise DataError(f"label {self.label} inconsistent with recipe {self.recipe}")


@dataclass
class GroundTruthBundle:
    image: np.ndarray        # blended (or original) image
    mask: np.ndarray         # soft blending mask, zeros for real
    boundary: np.ndarray     # 4*m*(1-m), zeros for real
    heatmap: np.ndarray      # adaptive Gaussians at vulnerable points
    consistency: np.ndarray  # 1 - |b_anchor - b|, ones for real
    label: int
    anchor: tuple[int, int] | None = None


@dataclass
class JitterParams:
    """Source/target view perturbations for self-blending.

    Each transform draws ``sign * U(min_frac*mag, mag)``; keeping draws away
    from zero guarantees every pseudo-fake carries a perceptible artifact.
    """

    brightness: float = 0.15    # additive offset bound
    contrast: float = 0.15      # relative contrast bound
    channel_gain: float = 0.08  # per-channel multiplicative bound
    translate: float = 0.04    # translation bound, fraction of side
    scale: float = 0.03        # relative rescale bound
    min_frac: float = 0.5      # lower fraction of each bound

    @staticmethod
    def none() -> "JitterParams":
        return JitterParams(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class SynthesisConfig:
    deform: DeformParams = field(default_factory=DeformParams)
    source_jitter: JitterParams = field(default_factory=JitterParams)
    target_jitter: JitterParams = field(default_factory=JitterParams)
    iou_threshold: float = 0.7

    @staticmethod
    def from_dict(d: dict) -> "SynthesisConfig":
        return SynthesisConfig(deform=DeformParams(**d["deform"]),
                               source_jitter=JitterParams(**d["source_jitter"]),
                               target_jitter=JitterParams(**d["target_jitter"]),
                               iou_threshold=d["iou_threshold"])


def _affine_image(img: np.ndarray, tx: float, ty: float, scale: float) -> np.ndarray:
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    src_x = (gx - cx - tx) / scale + cx
    src_y = (gy - cy - ty) / scale + cy
    if img.ndim == 2:
        return ndimage.map_coordinates(img, [src_y, src_x], order=1, mode="nearest")
    chans = [ndimage.map_coordinates(img[:, :, c], [src_y, src_x], order=1, mode="nearest")
             for c in range(img.shape[2])]
    return np.stack(chans, axis=2)


def _signed_draw(rng: np.random.Generator, mag: float, min_frac: float,
                 size=None) -> np.ndarray | float:
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return sign * rng.uniform(min_frac * mag, mag, size)


def apply_jitter(image: np.ndarray, params: JitterParams,
                 rng: np.random.Generator) -> np.ndarray:
    """Photometric then geometric jitter; zero magnitudes skip exactly."""
    out = image
    if params.contrast > 0:
        out = (out - 0.5) * (1.0 + _signed_draw(rng, params.contrast, params.min_frac)) + 0.5
    if params.brightness > 0:
        out = out + _signed_draw(rng, params.brightness, params.min_frac)
    if params.channel_gain > 0 and image.ndim == 3:
        gains = 1.0 + _signed_draw(rng, params.channel_gain, params.min_frac,
                                   size=image.shape[2])
        out = out * gains[None, None, :]
    if params.translate > 0 or params.scale > 0:
        h = image.shape[0]
        tx = _signed_draw(rng, params.translate, params.min_frac) * h
        ty = _signed_draw(rng, params.translate, params.min_frac) * h
        sc = 1.0 + _signed_draw(rng, params.scale, params.min_frac)
        out = _affine_image(out, tx, ty, sc)
    if out is image:
        return image.copy()
    return np.clip(out, 0.0, 1.0)


def _fake_bundle(image: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                 cfg: SynthesisConfig) -> GroundTruthBundle:
    boundary = boundary_mask(mask)
    points = vulnerable_points(boundary)
    heat = heatmap_gt(points, boundary, cfg.iou_threshold)
    if len(points) > 0:
        anchor = select_anchor(points, rng)
        cons = consistency_gt(boundary, anchor)
    else:
        anchor = None
        cons = np.ones_like(boundary)
    return GroundTruthBundle(image=image, mask=mask, boundary=boundary,
                             heatmap=heat, consistency=cons, label=1, anchor=anchor)


def make_real_sample(image: np.ndarray) -> GroundTruthBundle:
    validate_image(image)
    h, w = image.shape[:2]
    zeros = np.zeros((h, w), dtype=np.float64)
    return GroundTruthBundle(image=image.copy(), mask=zeros, boundary=zeros.copy(),
                             heatmap=zeros.copy(), consistency=np.ones((h, w)),
                             label=0, anchor=None)


def make_bi_sample(foreground: np.ndarray, fg_landmarks: np.ndarray,
                   background: np.ndarray, bg_landmarks: np.ndarray | None,
                   seed, cfg: SynthesisConfig | None = None) -> GroundTruthBundle:
    """Cross-image blend: foreground face region pasted onto the background."""
    cfg = cfg or SynthesisConfig()
    validate_image(foreground)
    validate_image(background)
    h, w = foreground.shape[:2]
    fg_landmarks = validate_landmarks(fg_landmarks, h, w)
    if background.shape[:2] != (h, w):
        background = resize_bilinear(background, h, w)
    rng = as_generator(seed)
    hull = convex_hull_mask(fg_landmarks, h, w)
    mask = deform_mask(hull, cfg.deform, rng)
    blended = blend(foreground, background, mask)
    return _fake_bundle(blended, mask, rng, cfg)


def make_sbi_sample(image: np.ndarray, landmarks: np.ndarray, seed,
                    cfg: SynthesisConfig | None = None) -> GroundTruthBundle:
    """Self-blend: jittered source and target views of one image."""
    cfg = cfg or SynthesisConfig()
    validate_image(image)
    h, w = image.shape[:2]
    landmarks = validate_landmarks(landmarks, h, w)
    rng = as_generator(seed)
    source = apply_jitter(image, cfg.source_jitter, rng)
    target = apply_jitter(image, cfg.target_jitter, rng)
    hull = convex_hull_mask(landmarks, h, w)
    mask = deform_mask(hull, cfg.deform, rng)
    blended = blend(source, target, mask)
    return _fake_bundle(blended, mask, rng, cfg)


# ---------------------------------------------------------------------------
# augmentation

@dataclass
class AugmentConfig:
    """Magnitudes for the eight training-time transforms; 0/False disables."""

    flip: bool = False
    crop: float = 0.0          # max fraction removed per side before resizing back
    scale: float = 0.0         # max relative rescale (re-cropped/padded to size)
    erase: float = 0.0         # max erased area fraction
    jitter: float = 0.0        # color jitter magnitude
    noise: float = 0.0         # max additive Gaussian sigma
    blur: float = 0.0          # max Gaussian blur sigma
    jpeg_quality: int = 0      # min JPEG quality (<=100); 0 disables

    def any_enabled(self) -> bool:
        return (self.flip or self.crop > 0 or self.scale > 0 or self.erase > 0
                or self.jitter > 0 or self.noise > 0 or self.blur > 0
                or self.jpeg_quality > 0)


def hflip(image: np.ndarray) -> np.ndarray:
    return image[:, ::-1].copy()


def jpeg_roundtrip(image: np.ndarray, quality: int) -> np.ndarray:
    """Encode/decode through an in-memory JPEG (8-bit, 4:4:4)."""
    arr = np.round(image * 255.0).astype(np.uint8)
    pil = PILImage.fromarray(arr if arr.ndim == 3 else arr, mode="RGB" if arr.ndim == 3 else "L")
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=int(quality), subsampling=0)
    buf.seek(0)
    with PILImage.open(buf) as dec:
        out = np.asarray(dec, dtype=np.float64) / 255.0
    return out


def augment(image: np.ndarray, config: AugmentConfig, rng) -> np.ndarray:
    """Apply the enabled transforms in a fixed order; same dims out as in."""
    validate_image(image)
    if not config.any_enabled():
        return image.copy()
    gen = as_generator(rng)
    h, w = image.shape[:2]
    out = image

    if config.flip and gen.random() < 0.5:
        out = hflip(out)
    if config.crop > 0:
        frac = gen.uniform(0.0, config.crop)
        ch, cw = max(1, round(h * (1 - frac))), max(1, round(w * (1 - frac)))
        oy = int(gen.integers(0, h - ch + 1))
        ox = int(gen.integers(0, w - cw + 1))
        out = resize_bilinear(out[oy:oy + ch, ox:ox + cw], h, w)
    if config.scale > 0:
        s = 1.0 + gen.uniform(-config.scale, config.scale)
        nh, nw = max(1, round(h * s)), max(1, round(w * s))
        scaled = resize_bilinear(out, nh, nw)
        if nh >= h:
            oy, ox = (nh - h) // 2, (nw - w) // 2
            out = scaled[oy:oy + h, ox:ox + w]
        else:
            py, px = (h - nh) // 2, (w - nw) // 2
            pad = [(py, h - nh - py), (px, w - nw - px)] + \
                ([(0, 0)] if out.ndim == 3 else [])
            out = np.pad(scaled, pad, mode="edge")
    if config.erase > 0:
        area = gen.uniform(0.02, max(config.erase, 0.02)) * h * w
        aspect = np.exp(gen.uniform(np.log(0.3), np.log(1 / 0.3)))
        eh = min(h, max(1, int(round(np.sqrt(area * aspect)))))
        ew = min(w, max(1, int(round(np.sqrt(area / aspect)))))
        oy = int(gen.integers(0, h - eh + 1))
        ox = int(gen.integers(0, w - ew + 1))
        patch_shape = (eh, ew) if out.ndim == 2 else (eh, ew, out.shape[2])
        out = out.copy()
        out[oy:oy + eh, ox:ox + ew] = gen.uniform(0.0, 1.0, size=patch_shape)
    if config.jitter > 0:
        jp = JitterParams(brightness=config.jitter, contrast=config.jitter,
                          channel_gain=config.jitter, translate=0.0, scale=0.0)
        out = apply_jitter(out, jp, gen)
    if config.noise > 0:
        sigma = gen.uniform(0.0, config.noise)
        out = out + gen.normal(0.0, max(sigma, 1e-12), size=out.shape)
    if config.blur > 0:
        sigma = gen.uniform(0.0, config.blur)
        if sigma > 1e-3:
            sig = (sigma, sigma) if out.ndim == 2 else (sigma, sigma, 0.0)
            out = ndimage.gaussian_filter(out, sig)
    out = np.clip(out, 0.0, 1.0)
    if config.jpeg_quality > 0:
        q = int(gen.integers(config.jpeg_quality, 101))
        out = jpeg_roundtrip(out, q)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# manifests

def _largest_remainder_counts(fractions: dict[str, float], total: int) -> dict[str, int]:
    keys = [k for k in RECIPES if k in fractions]
    raw = {k: fractions[k] * total for k in keys}
    counts = {k: int(np.floor(raw[k])) for k in keys}
    leftover = total - sum(counts.values())
    by_frac = sorted(keys, key=lambda k: (raw[k] - counts[k], k), reverse=True)
    for k in by_frac[:leftover]:
        counts[k] += 1
    return counts


def build_manifest(real_dir: str | os.PathLike, landmark_dir: str | os.PathLike,
                   recipe_mix: dict[str, float], master_seed: int
                   ) -> tuple[list[SampleRecord], list[tuple[str, str]]]:
    """Deterministic shuffled manifest; returns (records, excluded-with-reason)."""
    real_dir, landmark_dir = Path(real_dir), Path(landmark_dir)
    images = sorted(str(p) for p in real_dir.glob("*.png"))
    if not images:
        raise EmptyInputError(f"no PNG images found in {real_dir}")

    bad_keys = set(recipe_mix) - set(RECIPES)
    if bad_keys:
        raise ConfigError(f"unknown recipes in mix: {sorted(bad_keys)}")
    weights = {k: float(v) for k, v in recipe_mix.items() if float(v) > 0}
    if not weights or any(v < 0 for v in recipe_mix.values()):
        raise ConfigError(f"recipe mix must have positive weights, got {recipe_mix}")
    norm = sum(weights.values())
    weights = {k: v / norm for k, v in weights.items()}

    usable, excluded = [], []
    for img in images:
        stem = Path(img).stem
        lm = None
        for ext in (".json", ".csv"):
            cand = landmark_dir / (stem + ext)
            if cand.exists():
                lm = str(cand)
                break
        if lm is None:
            excluded.append((img, "missing landmark file"))
        else:
            usable.append((img, lm))
    if not usable:
        raise EmptyInputError(f"no image in {real_dir} has landmarks in {landmark_dir}")

    n = len(usable)
    counts = _largest_remainder_counts(weights, n)
    if counts.get("bi", 0) > 0 and n < 2:
        raise ConfigError("bi recipe needs at least two images for partner pairing")

    rng = as_generator(master_seed)
    order = rng.permutation(n)
    assignment = []
    for recipe in RECIPES:
        assignment.extend([recipe] * counts.get(recipe, 0))

    records = []
    for idx, (pos, recipe) in enumerate(zip(order, assignment)):
        img, lm = usable[pos]
        partner = None
        if recipe == "bi":
            k = int(rng.integers(0, n - 1))
            if k >= pos:
                k += 1
            partner = usable[k][0]
        records.append(SampleRecord(image_path=img, landmark_path=lm, recipe=recipe,
                                    partner_path=partner,
                                    seed=split_seed(master_seed, idx),
                                    label=0 if recipe == "real" else 1))
    return records, excluded


def write_manifest(path: str | os.PathLike, records: list[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec)) + "\n")


def read_manifest(path: str | os.PathLike) -> list[SampleRecord]:
    records = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(SampleRecord(**json.loads(line)))
                except (TypeError, ValueError, DataError) as exc:
                    raise DataError(f"{path}:{line_no}: bad record: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not records:
        raise EmptyInputError(f"manifest {path} is empty")
    return records


def bundle_from_record(record: SampleRecord, cfg: SynthesisConfig | None = None,
                       size: int | None = None) -> GroundTruthBundle:
    """Replay one manifest record into its ground-truth bundle."""
    cfg = cfg or SynthesisConfig()
    image = load_image(record.image_path)
    landmarks = load_landmarks(record.landmark_path)
    if size is not None and image.shape[:2] != (size, size):
        sy, sx = size / image.shape[0], size / image.shape[1]
        image = resize_bilinear(image, size, size)
        landmarks = landmarks * np.array([sx, sy])
    h, w = image.shape[:2]
    landmarks = validate_landmarks(np.clip(landmarks, 0, [w - 1, h - 1]), h, w)

    if record.recipe == "real":
        return make_real_sample(image)
    if record.recipe == "sbi":
        return make_sbi_sample(image, landmarks, record.seed, cfg)
    partner = load_image(record.partner_path)
    return make_bi_sample(image, landmarks, partner, None, record.seed, cfg)
