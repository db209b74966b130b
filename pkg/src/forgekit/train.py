"""Training loop: SGD with momentum, warmup-then-decay learning rate.

Supervision targets for the heatmap/consistency branches are regenerated at
the head resolution by block-averaging each sample's blending mask (the
heads predict at 1/4 input resolution). The per-epoch metric log is written
with repr-formatted floats so identical seeds reproduce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .labels import boundary_mask, consistency_gt, heatmap_gt, select_anchor, vulnerable_points
from .losses import (LossWeights, classification_loss, classification_loss_grad,
                     consistency_loss, consistency_loss_grad, focal_heatmap_loss,
                     focal_heatmap_loss_grad)
from .metrics import ScoredSet, auc
from .model import ModelConfig, backward, forward, init_params
from .nn import sigmoid
from .rng import generator_from_seed, split_seed
from .synthesis import SampleRecord, SynthesisConfig, bundle_from_record

ANCHOR_STREAM = 1   # sub-seed index for head-resolution anchor selection
INIT_STREAM = 2
ORDER_STREAM = 3


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 10
    lr_peak: float = 4e-3
    lr_start: float = 1e-3
    warmup_frac: float = 0.25
    momentum: float = 0.9
    weight_decay: float = 0.0
    val_frac: float = 0.25
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 < self.val_frac < 1.0:
            raise ConfigError("val_frac must be in (0, 1)")


@dataclass
class TrainSample:
    x: np.ndarray            # (C, H, W)
    label: int
    heat_target: np.ndarray  # (Dh, Dh)
    cons_target: np.ndarray  # (Dh, Dh)
    seed: int


@dataclass
class TrainResult:
    params: dict
    model: ModelConfig
    log_lines: list[str]
    val_auc: float
    val_heatmap_peak_mean: float
    train_indices: list[int]
    val_indices: list[int]


def block_mean(arr: np.ndarray, factor: int) -> np.ndarray:
    h, w = arr.shape
    return arr.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def prepare_sample(record: SampleRecord, synth_cfg: SynthesisConfig,
                   model_cfg: ModelConfig) -> TrainSample:
    bundle = bundle_from_record(record, synth_cfg, size=model_cfg.input_size)
    x = np.transpose(bundle.image, (2, 0, 1))
    dh = model_cfg.head_size
    stride = model_cfg.input_size // dh
    if bundle.label == 0:
        return TrainSample(x=x, label=0, heat_target=np.zeros((dh, dh)),
                           cons_target=np.ones((dh, dh)), seed=record.seed)
    small_mask = block_mean(bundle.mask, stride)
    small_boundary = boundary_mask(small_mask)
    points = vulnerable_points(small_boundary)
    heat = heatmap_gt(points, small_boundary, synth_cfg.iou_threshold)
    if len(points) > 0:
        anchor = select_anchor(points, generator_from_seed(split_seed(record.seed, ANCHOR_STREAM)))
        cons = consistency_gt(small_boundary, anchor)
    else:
        cons = np.ones_like(small_boundary)
    return TrainSample(x=x, label=1, heat_target=heat, cons_target=cons,
                       seed=record.seed)


def learning_rate(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup over the first quarter, then linear decay to zero."""
    t = (step + 1) / max(total_steps, 1)
    if t <= cfg.warmup_frac:
        return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * t / cfg.warmup_frac
    return cfg.lr_peak * (1.0 - t) / (1.0 - cfg.warmup_frac)


def _batch_losses_and_grads(params, cfg: TrainConfig, batch: list[TrainSample]):
    x = np.stack([s.x for s in batch])
    labels = np.array([s.label for s in batch])
    heat_t = np.stack([s.heat_target for s in batch])
    cons_t = np.stack([s.cons_target for s in batch])
    out, _, cache = forward(params, x, cfg.model, want_cache=True)
    n = len(batch)
    w = cfg.weights

    bce = float(np.mean([classification_loss(out.logit[i], int(labels[i]), w.smoothing_eps)
                         for i in range(n)]))
    d_logit = np.array([classification_loss_grad(out.logit[i], int(labels[i]),
                                                 w.smoothing_eps) for i in range(n)]) / n

    heat_l = focal_heatmap_loss(out.heatmap, heat_t, w.gamma) / n
    d_heat = focal_heatmap_loss_grad(out.heatmap, heat_t, w.gamma) * (w.lambda1 / n)

    cons_l = consistency_loss(out.consistency, cons_t)
    d_cons = consistency_loss_grad(out.consistency, cons_t) * w.lambda2

    total = bce + w.lambda1 * heat_l + w.lambda2 * cons_l
    grads = backward(params, cfg.model, cache, d_logit, d_heat, d_cons)
    return total, grads


def _scores(params, cfg: TrainConfig, samples: list[TrainSample]) -> np.ndarray:
    scores = []
    for i in range(0, len(samples), cfg.batch_size):
        chunk = samples[i:i + cfg.batch_size]
        x = np.stack([s.x for s in chunk])
        out, _ = forward(params, x, cfg.model)
        scores.extend(sigmoid(out.logit).tolist())
    return np.array(scores)


def _heatmap_peak_mean(params, cfg: TrainConfig, samples: list[TrainSample]) -> float:
    vals = []
    for i in range(0, len(samples), cfg.batch_size):
        chunk = samples[i:i + cfg.batch_size]
        x = np.stack([s.x for s in chunk])
        out, _ = forward(params, x, cfg.model)
        for j, s in enumerate(chunk):
            peaks = s.heat_target == 1.0
            if s.label == 1 and peaks.any():
                vals.append(float(out.heatmap[j][peaks].mean()))
    return float(np.mean(vals)) if vals else float("nan")


def stratified_split(labels: np.ndarray, val_frac: float,
                     rng: np.random.Generator) -> tuple[list[int], list[int]]:
    train_idx: list[int] = []
    val_idx: list[int] = []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = max(1, int(round(len(idx) * val_frac))) if len(idx) else 0
        val_idx.extend(idx[:n_val].tolist())
        train_idx.extend(idx[n_val:].tolist())
    return sorted(train_idx), sorted(val_idx)


def train_toy(records: list[SampleRecord], hyper: TrainConfig,
              synth_cfg: SynthesisConfig | None = None) -> TrainResult:
    """Minimize the three-branch loss over manifest records; log per epoch."""
    synth_cfg = synth_cfg or SynthesisConfig()
    samples = [prepare_sample(r, synth_cfg, hyper.model) for r in records]
    labels = np.array([s.label for s in samples])

    order_rng = generator_from_seed(split_seed(hyper.seed, ORDER_STREAM))
    train_idx, val_idx = stratified_split(labels, hyper.val_frac, order_rng)
    train_set = [samples[i] for i in train_idx]
    val_set = [samples[i] for i in val_idx]

    params = init_params(hyper.model, split_seed(hyper.seed, INIT_STREAM))
    velocity = {k: np.zeros_like(v) for k, v in params.items()}

    steps_per_epoch = max(1, (len(train_set) + hyper.batch_size - 1) // hyper.batch_size)
    total_steps = steps_per_epoch * hyper.epochs
    step = 0
    log_lines = ["epoch,loss,val_auc"]

    for epoch in range(hyper.epochs):
        perm = order_rng.permutation(len(train_set))
        epoch_losses = []
        for b in range(steps_per_epoch):
            batch = [train_set[i] for i in perm[b * hyper.batch_size:(b + 1) * hyper.batch_size]]
            if not batch:
                continue
            loss, grads = _batch_losses_and_grads(params, hyper, batch)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} step {b}; "
                    f"batch seeds: {[s.seed for s in batch]}")
            lr = learning_rate(step, total_steps, hyper)
            for k in params:
                g = grads[k]
                if hyper.weight_decay:
                    g = g + hyper.weight_decay * params[k]
                velocity[k] = hyper.momentum * velocity[k] - lr * g
                params[k] = params[k] + velocity[k]
            epoch_losses.append(loss)
            step += 1
        val_scores = _scores(params, hyper, val_set)
        val_auc = auc(ScoredSet(val_scores, np.array([s.label for s in val_set])))
        log_lines.append(f"{epoch},{repr(float(np.mean(epoch_losses)))},{repr(val_auc)}")

    peak_mean = _heatmap_peak_mean(params, hyper, val_set)
    return TrainResult(params=params, model=hyper.model, log_lines=log_lines,
                       val_auc=val_auc, val_heatmap_peak_mean=peak_mean,
                       train_indices=train_idx, val_indices=val_idx)
