"""Detection metrics, structural-similarity scoring, and the perturbation suite.

AUC is the Mann-Whitney rank statistic with ties counted 1/2; AP follows the
rank-based precision step sum, with tied scores collapsed into one threshold
block (so constant scores give AP == prevalence). AR and mF1 operate at a
fixed 0.5 threshold; mF1 macro-averages the per-class F1. Mask-SSIM averages
the SSIM map only over windows whose centers fall in the head region.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.stats import rankdata

from .errors import (ConfigError, DataError, DimensionError, EmptyInputError,
                     UndefinedMetricError)
from .imaging import convex_hull_mask, validate_landmarks
from .rng import as_generator

OPERATING_THRESHOLD = 0.5


@dataclass
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray
    groups: list[str] | None = None
    ids: list[str] | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise DimensionError("scores and labels must be equal-length 1-D arrays")
        if self.scores.size == 0:
            raise EmptyInputError("scored set is empty")
        if not np.all(np.isin(self.labels, [0, 1])):
            raise DataError("labels must be 0 or 1")

    def video_level(self) -> "ScoredSet":
        """Aggregate frame scores to one mean score per group id."""
        if self.groups is None:
            raise DataError("no group ids available for video-level aggregation")
        order: list[str] = []
        frames: dict[str, list[int]] = {}
        for i, g in enumerate(self.groups):
            if g not in frames:
                frames[g] = []
                order.append(g)
            frames[g].append(i)
        vid_scores, vid_labels = [], []
        for g in order:
            idx = frames[g]
            labels = {int(self.labels[i]) for i in idx}
            if len(labels) != 1:
                raise DataError(f"group {g!r} mixes real and fake frames")
            vid_scores.append(video_score([float(self.scores[i]) for i in idx]))
            vid_labels.append(labels.pop())
        return ScoredSet(np.array(vid_scores), np.array(vid_labels),
                         groups=None, ids=order)


def _require_both_classes(labels: np.ndarray) -> tuple[int, int]:
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("need at least one positive and one negative")
    return n_pos, n_neg


def auc(scored: ScoredSet) -> float:
    """Mann-Whitney AUC; tied score pairs count 1/2."""
    n_pos, n_neg = _require_both_classes(scored.labels)
    ranks = rankdata(scored.scores)  # average rank over ties
    pos_rank_sum = ranks[scored.labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scored: ScoredSet) -> float:
    """Rank-based AP; tied scores form one threshold block ending the step."""
    n_pos, _ = _require_both_classes(scored.labels)
    order = np.argsort(-scored.scores, kind="stable")
    s = scored.scores[order]
    y = scored.labels[order]
    ap = 0.0
    tp = fp = 0
    i, n = 0, s.size
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        tp_blk = int(y[i:j].sum())
        fp_blk = (j - i) - tp_blk
        tp += tp_blk
        fp += fp_blk
        if tp_blk:
            ap += (tp_blk / n_pos) * (tp / (tp + fp))
        i = j
    return float(ap)


def average_recall(scored: ScoredSet, threshold: float = OPERATING_THRESHOLD) -> float:
    """Recall of the positive class with scores thresholded at ``threshold``."""
    n_pos, _ = _require_both_classes(scored.labels)
    pred = scored.scores >= threshold
    tp = int(np.sum(pred & (scored.labels == 1)))
    return float(tp / n_pos)


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def mean_f1(scored: ScoredSet, threshold: float = OPERATING_THRESHOLD) -> float:
    """Macro F1 over the fake and real classes at the fixed threshold."""
    _require_both_classes(scored.labels)
    pred = (scored.scores >= threshold).astype(np.int64)
    y = scored.labels
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    return float((_f1(tp, fp, fn) + _f1(tn, fn, fp)) / 2.0)


def video_score(frame_scores: list[float]) -> float:
    """Arithmetic mean of the per-frame scores."""
    if len(frame_scores) == 0:
        raise EmptyInputError("no frame scores to aggregate")
    return float(np.mean(np.asarray(frame_scores, dtype=np.float64)))


def metrics_report(scored: ScoredSet) -> dict:
    n_pos, n_neg = _require_both_classes(scored.labels)
    return {"auc": auc(scored), "ap": average_precision(scored),
            "ar": average_recall(scored), "mf1": mean_f1(scored),
            "n_pos": n_pos, "n_neg": n_neg}


def roc_curve(scored: ScoredSet) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) at every distinct threshold, for plotting."""
    n_pos, n_neg = _require_both_classes(scored.labels)
    order = np.argsort(-scored.scores, kind="stable")
    y = scored.labels[order]
    s = scored.scores[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = distinct + 1 - tps
    return np.r_[0.0, fps / n_neg], np.r_[0.0, tps / n_pos]


# ---------------------------------------------------------------------------
# scores CSV: id, group, score, label

def write_scores_csv(path: str | os.PathLike, scored: ScoredSet) -> None:
    ids = scored.ids or [str(i) for i in range(scored.scores.size)]
    groups = scored.groups or ids
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "group", "score", "label"])
        for i in range(scored.scores.size):
            writer.writerow([ids[i], groups[i], repr(float(scored.scores[i])),
                             int(scored.labels[i])])


def read_scores_csv(path: str | os.PathLike) -> ScoredSet:
    ids, groups, scores, labels = [], [], [], []
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                ids.append(row["id"])
                groups.append(row["group"])
                scores.append(float(row["score"]))
                labels.append(int(row["label"]))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot read scores csv {path}: {exc}") from exc
    if not scores:
        raise EmptyInputError(f"scores csv {path} has no rows")
    return ScoredSet(np.array(scores), np.array(labels), groups=groups, ids=ids)


# ---------------------------------------------------------------------------
# SSIM (Gaussian-windowed, valid region) and Mask-SSIM

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _ssim_map_2d(a: np.ndarray, b: np.ndarray, dynamic_range: float) -> np.ndarray:
    half = SSIM_WINDOW // 2
    ax = np.arange(SSIM_WINDOW) - half
    g1 = np.exp(-(ax ** 2) / (2.0 * SSIM_SIGMA ** 2))
    kernel = np.outer(g1, g1)
    kernel /= kernel.sum()

    def win_mean(x):
        w = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
        return np.einsum("ijuv,uv->ij", w, kernel, optimize=True)

    mu_a = win_mean(a)
    mu_b = win_mean(b)
    aa = win_mean(a * a) - mu_a * mu_a
    bb = win_mean(b * b) - mu_b * mu_b
    ab = win_mean(a * b) - mu_a * mu_b
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * ab + c2)) / \
           ((mu_a ** 2 + mu_b ** 2 + c1) * (aa + bb + c2))


def ssim_map(a: np.ndarray, b: np.ndarray, dynamic_range: float = 1.0) -> np.ndarray:
    """Per-window SSIM over the valid region, averaged across channels."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise DimensionError(f"images smaller than the {SSIM_WINDOW}px SSIM window")
    if a.ndim == 2:
        return _ssim_map_2d(a, b, dynamic_range)
    maps = [_ssim_map_2d(a[:, :, c], b[:, :, c], dynamic_range)
            for c in range(a.shape[2])]
    return np.mean(maps, axis=0)


def ssim(a: np.ndarray, b: np.ndarray, dynamic_range: float = 1.0) -> float:
    return float(ssim_map(a, b, dynamic_range).mean())


def mask_ssim(fake: np.ndarray, real: np.ndarray, head_mask: np.ndarray,
              dynamic_range: float = 1.0) -> float:
    """Mean SSIM over windows centered in the head region."""
    if head_mask.shape != fake.shape[:2]:
        raise DimensionError("head mask must match image spatial dims")
    smap = ssim_map(fake, real, dynamic_range)
    half = SSIM_WINDOW // 2
    centers = head_mask[half:half + smap.shape[0], half:half + smap.shape[1]] > 0.5
    if not centers.any():
        raise DataError("head mask covers no complete SSIM window")
    return float(smap[centers].mean())


def head_mask_from_landmarks(landmarks: np.ndarray, height: int, width: int,
                             dilation: float = 0.1) -> np.ndarray:
    """Convex hull of the landmarks, inflated about its centroid."""
    pts = validate_landmarks(landmarks)
    center = pts.mean(axis=0)
    inflated = center + (pts - center) * (1.0 + dilation)
    inflated = np.clip(inflated, 0, [width - 1, height - 1])
    return convex_hull_mask(inflated, height, width)


# ---------------------------------------------------------------------------
# perturbation suite

PERTURBATION_KINDS = ("saturation", "contrast", "block", "noise", "blur", "pixelation")

# severity 1..5 constants (documented convention; severity 0 is the identity)
SATURATION_FACTORS = (0.8, 0.6, 0.4, 0.2, 0.0)
CONTRAST_FACTORS = (0.8, 0.6, 0.45, 0.3, 0.2)
BLOCK_COUNTS = (2, 4, 6, 8, 10)
NOISE_SIGMAS = (0.01, 0.02, 0.05, 0.1, 0.15)
BLUR_SIGMAS = (0.5, 1.0, 1.5, 2.5, 4.0)


@dataclass
class PerturbationSpec:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        if not 0 <= self.severity <= 5:
            raise ConfigError(f"severity must be 0..5, got {self.severity}")


def _block_mean_downup(img: np.ndarray, factor: int) -> np.ndarray:
    h, w = img.shape[:2]
    ph = (-h) % factor
    pw = (-w) % factor
    pad = [(0, ph), (0, pw)] + ([(0, 0)] if img.ndim == 3 else [])
    padded = np.pad(img, pad, mode="edge")
    hh, ww = padded.shape[0] // factor, padded.shape[1] // factor
    if img.ndim == 2:
        blocks = padded.reshape(hh, factor, ww, factor).mean(axis=(1, 3))
        up = np.repeat(np.repeat(blocks, factor, axis=0), factor, axis=1)
    else:
        blocks = padded.reshape(hh, factor, ww, factor, -1).mean(axis=(1, 3))
        up = np.repeat(np.repeat(blocks, factor, axis=0), factor, axis=1)
    return up[:h, :w]


def perturb(image: np.ndarray, spec: PerturbationSpec, seed=0) -> np.ndarray:
    """Deterministic corruption of ``image`` at the given severity."""
    if spec.severity == 0:
        return image.copy()
    rng = as_generator(seed)
    level = spec.severity - 1
    out = image.astype(np.float64, copy=True)

    if spec.kind == "saturation":
        if out.ndim == 3:
            gray = out.mean(axis=2, keepdims=True)
            out = gray + SATURATION_FACTORS[level] * (out - gray)
    elif spec.kind == "contrast":
        mean = out.mean()
        out = mean + CONTRAST_FACTORS[level] * (out - mean)
    elif spec.kind == "block":
        h, w = out.shape[:2]
        side = max(1, min(h, w) // 8)
        for _ in range(BLOCK_COUNTS[level]):
            oy = int(rng.integers(0, h - side + 1))
            ox = int(rng.integers(0, w - side + 1))
            out[oy:oy + side, ox:ox + side] = 0.0
    elif spec.kind == "noise":
        out = out + rng.normal(0.0, NOISE_SIGMAS[level], size=out.shape)
    elif spec.kind == "blur":
        sig = (BLUR_SIGMAS[level],) * 2 + ((0.0,) if out.ndim == 3 else ())
        out = ndimage.gaussian_filter(out, sig)
    elif spec.kind == "pixelation":
        out = _block_mean_downup(out, 2 ** spec.severity)
    return np.clip(out, 0.0, 1.0)
