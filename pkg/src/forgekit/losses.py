"""Training losses: heatmap focal loss, consistency BCE, smoothed classification BCE.

Heatmap pixels with target exactly 1.0 are positives (score the prediction
itself), everything else is negative (score one minus the prediction); the
focal term down-weights easy pixels. The heatmap loss is a sum over pixels,
the consistency loss a mean, so the consistency weight is resolution
independent. Predictions are clamped to [1e-7, 1 - 1e-7] before logs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

CLAMP_EPS = 1e-7


@dataclass
class LossWeights:
    lambda1: float = 10.0        # heatmap branch weight
    lambda2: float = 100.0       # consistency branch weight
    gamma: float = 2.0           # focal exponent
    smoothing_eps: float = 0.1   # classification label smoothing

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.gamma < 0:
            raise ConfigError("focal gamma must be non-negative")
        if not 0.0 <= self.smoothing_eps < 0.5:
            raise ConfigError("smoothing_eps must lie in [0, 0.5)")


def _check_open_unit(pred: np.ndarray, name: str) -> None:
    if np.any(pred <= 0.0) or np.any(pred >= 1.0):
        raise DomainError(f"{name} must be strictly inside (0, 1); apply a sigmoid first")


def focal_heatmap_loss(pred: np.ndarray, target: np.ndarray, gamma: float = 2.0) -> float:
    """Sum over pixels of ``-(1 - h~)^gamma * log(h~)``.

    ``h~`` is the prediction at target==1 pixels and one minus the prediction
    elsewhere (exact equality against 1.0; peaks are constructed as exact).
    """
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {target.shape}")
    _check_open_unit(pred, "heatmap prediction")
    h = np.where(target == 1.0, pred, 1.0 - pred)
    h = np.clip(h, CLAMP_EPS, 1.0 - CLAMP_EPS)
    return float(np.sum(-((1.0 - h) ** gamma) * np.log(h)))


def focal_heatmap_loss_grad(pred: np.ndarray, target: np.ndarray,
                            gamma: float = 2.0) -> np.ndarray:
    """d(loss)/d(pred), zero where the safety clamp is active."""
    _check_open_unit(pred, "heatmap prediction")
    pos = target == 1.0
    h = np.where(pos, pred, 1.0 - pred)
    inside = (h > CLAMP_EPS) & (h < 1.0 - CLAMP_EPS)
    hc = np.clip(h, CLAMP_EPS, 1.0 - CLAMP_EPS)
    dh = gamma * (1.0 - hc) ** (gamma - 1.0) * np.log(hc) - (1.0 - hc) ** gamma / hc
    dh = np.where(inside, dh, 0.0)
    return np.where(pos, dh, -dh)


def consistency_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy between the consistency map and its target."""
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {target.shape}")
    _check_open_unit(pred, "consistency prediction")
    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    return float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))))


def consistency_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    _check_open_unit(pred, "consistency prediction")
    inside = (pred > CLAMP_EPS) & (pred < 1.0 - CLAMP_EPS)
    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    g = (-target / p + (1.0 - target) / (1.0 - p)) / pred.size
    return np.where(inside, g, 0.0)


def classification_loss(logit: float, label: int, smoothing_eps: float = 0.0) -> float:
    """BCE on ``sigmoid(logit)`` against the smoothed label, in stable form."""
    if label not in (0, 1):
        raise DomainError(f"label must be 0 or 1, got {label}")
    tau = label * (1.0 - smoothing_eps) + (1 - label) * smoothing_eps
    z = float(logit)
    # -[tau*log(sig(z)) + (1-tau)*log(1-sig(z))] without overflow
    return float(tau * np.logaddexp(0.0, -z) + (1.0 - tau) * np.logaddexp(0.0, z))


def classification_loss_grad(logit: float, label: int, smoothing_eps: float = 0.0) -> float:
    tau = label * (1.0 - smoothing_eps) + (1 - label) * smoothing_eps
    sig = 1.0 / (1.0 + np.exp(-logit)) if logit >= 0 else np.exp(logit) / (1.0 + np.exp(logit))
    return float(sig - tau)


def total_loss(bce: float, heatmap: float, consistency: float,
               weights: LossWeights) -> float:
    """``bce + lambda1*heatmap + lambda2*consistency``."""
    return float(bce + weights.lambda1 * heatmap + weights.lambda2 * consistency)
