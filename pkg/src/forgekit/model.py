"""Toy multi-branch detector: pyramid backbone, weighted-mask fusion, three heads.

The backbone is a chain of stride-2 convs + SiLU; the last ``N-1`` outputs
form the feature pyramid (each level half the side of the previous). Fusion
walks top-down: the deeper fused map goes through a conv and a stride-2
transpose conv giving ``E`` with the same shape as the current level ``F``,
then

    fused = concat(F * (1 - sigmoid(E))**gamma_w, E)

so pixels already explained by deeper levels are suppressed before the
low-level features are appended. Heads attach to the final fused map (1/4
input resolution): 1x1 conv + sigmoid for the heatmap and consistency
branches, global mean pool + affine for the classification logit.

Everything is float64 with explicit backward passes; the test suite
certifies every gradient against central finite differences.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .nn import (conv2d, conv2d_backward, sigmoid, silu, silu_grad,
                 transpose_conv2d, transpose_conv2d_backward)
from .rng import generator_from_seed

HEAD_CLAMP = 1e-7
INPUT_SCALE = 4.0


@dataclass
class EfpnConfig:
    """Fusion hyperparameters: suppression exponent and kernel sizes."""

    gamma_w: float = 1.0
    conv_kernel: int = 3   # odd; stride 1, same-size
    up_kernel: int = 4     # even; stride 2, exact doubling

    def __post_init__(self):
        if self.gamma_w < 0:
            raise ConfigError("gamma_w must be non-negative")
        if self.conv_kernel % 2 != 1:
            raise ConfigError("conv_kernel must be odd")
        if self.up_kernel % 2 != 0:
            raise ConfigError("up_kernel must be even")

    @property
    def conv_pad(self) -> int:
        return self.conv_kernel // 2

    @property
    def up_pad(self) -> int:
        return (self.up_kernel - 2) // 2


@dataclass
class ModelConfig:
    input_size: int = 64
    in_channels: int = 3
    channels: tuple = (8, 16, 24, 32)   # stem + pyramid levels 2..N
    efpn: EfpnConfig = field(default_factory=EfpnConfig)

    def __post_init__(self):
        if isinstance(self.channels, list):
            self.channels = tuple(self.channels)
        if isinstance(self.efpn, dict):
            self.efpn = EfpnConfig(**self.efpn)
        if len(self.channels) < 3:
            raise ConfigError("need a stem plus at least two pyramid levels")
        if self.input_size % (2 ** len(self.channels)) != 0:
            raise ConfigError(
                f"input size {self.input_size} not divisible by 2^{len(self.channels)}")

    @property
    def n_levels(self) -> int:
        """N: pyramid levels are 2..N."""
        return len(self.channels)

    @property
    def head_channels(self) -> int:
        return 2 * self.channels[1]

    @property
    def head_size(self) -> int:
        return self.input_size // 4


@dataclass
class ModelOutput:
    logit: np.ndarray        # (B,) pre-sigmoid fake scores
    heatmap: np.ndarray      # (B, Dh, Dh), strictly in (0, 1)
    consistency: np.ndarray  # (B, Dh, Dh), strictly in (0, 1)


def validate_pyramid(maps: list[np.ndarray]) -> None:
    for a, b in zip(maps, maps[1:]):
        if a.shape[2] != 2 * b.shape[2] or a.shape[3] != 2 * b.shape[3]:
            raise DimensionError("pyramid levels must halve spatial size")


# ---------------------------------------------------------------------------
# parameters

def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Kaiming fan-in init, seeded; insertion order fixes serialization order."""
    rng = generator_from_seed(seed)
    params: dict[str, np.ndarray] = {}

    def kaiming(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    prev = config.in_channels
    for i, ch in enumerate(config.channels, start=1):
        params[f"conv{i}.w"] = kaiming((ch, prev, 3, 3), prev * 9)
        params[f"conv{i}.b"] = np.zeros(ch)
        prev = ch

    n = config.n_levels
    fk, uk = config.efpn.conv_kernel, config.efpn.up_kernel
    in_ch = config.channels[-1]                      # channels of F^N
    for l in range(n - 1, 1, -1):
        n_l = config.channels[l - 1]
        params[f"fuse{l}.conv.w"] = kaiming((in_ch, in_ch, fk, fk), in_ch * fk * fk)
        params[f"fuse{l}.conv.b"] = np.zeros(in_ch)
        params[f"fuse{l}.up.w"] = kaiming((in_ch, n_l, uk, uk), in_ch * uk * uk)
        params[f"fuse{l}.up.b"] = np.zeros(n_l)
        in_ch = 2 * n_l                              # channels of F'^l

    # zero-init dense heads: predictions start flat at 0.5, which keeps the
    # large branch weights from blowing up the first optimizer steps; the
    # classifier gets a small random read-out so its gradient path is alive
    hc = config.head_channels
    for head in ("heatmap", "consistency"):
        params[f"head_{head}.w"] = np.zeros((1, hc, 1, 1))
        params[f"head_{head}.b"] = np.zeros(1)
    params["head_cls.w"] = rng.standard_normal(hc) / np.sqrt(hc)
    params["head_cls.b"] = np.zeros(1)
    return params


# ---------------------------------------------------------------------------
# fusion rule (exposed standalone so it can be oracle-tested in isolation)

def fuse_weighted_concat(f_l: np.ndarray, e_l: np.ndarray, gamma_w: float):
    """``concat(F * (1 - sigmoid(E))**gamma_w, E)`` along channels.

    Returns (fused, cache). ``gamma_w == 0`` reduces to plain concatenation
    exactly (the weight mask is identically 1).
    """
    if f_l.shape[0] != e_l.shape[0] or f_l.shape[2:] != e_l.shape[2:]:
        raise DimensionError(f"fusion shape mismatch: {f_l.shape} vs {e_l.shape}")
    s = sigmoid(e_l)
    wmask = np.ones_like(s) if gamma_w == 0 else (1.0 - s) ** gamma_w
    fused = np.concatenate([f_l * wmask, e_l], axis=1)
    return fused, (s, wmask)


def fuse_weighted_concat_backward(f_l, e_l, cache, grad_fused, gamma_w):
    s, wmask = cache
    n_l = f_l.shape[1]
    g1 = grad_fused[:, :n_l]
    g2 = grad_fused[:, n_l:]
    d_f = g1 * wmask
    # d wmask / d e = -gamma * s * (1-s)**gamma = -gamma * s * wmask
    d_e = g2 if gamma_w == 0 else g2 - gamma_w * (g1 * f_l * s * wmask)
    return d_f, d_e


def efpn_fuse(f_l: np.ndarray, f_next_fused: np.ndarray,
              weights: dict[str, np.ndarray], config: EfpnConfig) -> np.ndarray:
    """One full fusion step: E = up(conv(deeper)), then weighted concat.

    ``weights`` holds ``conv.w``, ``conv.b``, ``up.w``, ``up.b``. The
    upsampled E must match F_l's shape exactly.
    """
    mid = conv2d(f_next_fused, weights["conv.w"], weights["conv.b"],
                 stride=1, padding=config.conv_pad)
    e_l = transpose_conv2d(mid, weights["up.w"], weights["up.b"],
                           stride=2, padding=config.up_pad)
    if e_l.shape != f_l.shape:
        raise DimensionError(
            f"upsampled features {e_l.shape} do not match level shape {f_l.shape}")
    fused, _ = fuse_weighted_concat(f_l, e_l, config.gamma_w)
    return fused


# ---------------------------------------------------------------------------
# forward / backward

def forward(params: dict[str, np.ndarray], x: np.ndarray, config: ModelConfig,
            want_cache: bool = False):
    """Run the detector on a batch ``(B, C, H, W)``.

    Returns ``(ModelOutput, pyramid)`` or ``(ModelOutput, pyramid, cache)``.
    """
    if x.ndim != 4 or x.shape[1] != config.in_channels:
        raise DimensionError(f"expected (B, {config.in_channels}, H, W), got {x.shape}")
    if x.shape[2] != x.shape[3] or x.shape[2] % (2 ** config.n_levels) != 0:
        raise DimensionError(
            f"input side must be square and divisible by {2 ** config.n_levels}")

    n = config.n_levels
    # center/rescale so unit-interval pixels give roughly unit-scale features
    x = (x - 0.5) * INPUT_SCALE
    acts = [x]
    pre = []
    a = x
    for i in range(1, n + 1):
        z = conv2d(a, params[f"conv{i}.w"], params[f"conv{i}.b"], stride=2, padding=1)
        a = silu(z)
        pre.append(z)
        acts.append(a)
    pyramid = acts[2:]                       # F^2 .. F^N
    validate_pyramid(pyramid)

    fused = pyramid[-1]
    fuse_cache = {}
    for l in range(n - 1, 1, -1):
        f_l = pyramid[l - 2]
        mid = conv2d(fused, params[f"fuse{l}.conv.w"], params[f"fuse{l}.conv.b"],
                     stride=1, padding=config.efpn.conv_pad)
        e_l = transpose_conv2d(mid, params[f"fuse{l}.up.w"], params[f"fuse{l}.up.b"],
                               stride=2, padding=config.efpn.up_pad)
        if e_l.shape != f_l.shape:
            raise DimensionError(
                f"level {l}: upsampled {e_l.shape} does not match {f_l.shape}")
        new_fused, wc = fuse_weighted_concat(f_l, e_l, config.efpn.gamma_w)
        fuse_cache[l] = (fused, mid, e_l, wc)
        fused = new_fused

    hm_z = conv2d(fused, params["head_heatmap.w"], params["head_heatmap.b"])
    cons_z = conv2d(fused, params["head_consistency.w"], params["head_consistency.b"])
    # float64 sigmoid rounds to 1.0 past z ~ 37; clamp to keep the open
    # interval contract (and losses finite) under saturation
    hm = np.clip(sigmoid(hm_z), HEAD_CLAMP, 1.0 - HEAD_CLAMP)
    cons = np.clip(sigmoid(cons_z), HEAD_CLAMP, 1.0 - HEAD_CLAMP)
    pooled = fused.mean(axis=(2, 3))
    logit = pooled @ params["head_cls.w"] + params["head_cls.b"][0]

    out = ModelOutput(logit=logit, heatmap=hm[:, 0], consistency=cons[:, 0])
    if not want_cache:
        return out, pyramid
    cache = {"x": x, "pre": pre, "acts": acts, "pyramid": pyramid,
             "fuse": fuse_cache, "fused": fused, "hm": hm, "cons": cons,
             "pooled": pooled}
    return out, pyramid, cache


def backward(params: dict[str, np.ndarray], config: ModelConfig, cache: dict,
             d_logit: np.ndarray, d_heatmap: np.ndarray,
             d_consistency: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients w.r.t. every parameter.

    ``d_heatmap``/``d_consistency`` are gradients w.r.t. the post-sigmoid
    predictions; the sigmoid is chained here.
    """
    n = config.n_levels
    fused = cache["fused"]
    hm, cons, pooled = cache["hm"], cache["cons"], cache["pooled"]
    grads: dict[str, np.ndarray] = {}

    # heads
    grads["head_cls.w"] = pooled.T @ d_logit
    grads["head_cls.b"] = np.array([d_logit.sum()])
    hw = fused.shape[2] * fused.shape[3]
    d_fused = (d_logit[:, None] * params["head_cls.w"][None, :])[:, :, None, None] \
        * (1.0 / hw)
    d_fused = np.broadcast_to(d_fused, fused.shape).copy()

    d_hm_z = (d_heatmap * hm[:, 0] * (1.0 - hm[:, 0]))[:, None]
    dxh, dwh, dbh = conv2d_backward(fused, params["head_heatmap.w"], d_hm_z)
    grads["head_heatmap.w"], grads["head_heatmap.b"] = dwh, dbh
    d_fused += dxh

    d_cons_z = (d_consistency * cons[:, 0] * (1.0 - cons[:, 0]))[:, None]
    dxc, dwc, dbc = conv2d_backward(fused, params["head_consistency.w"], d_cons_z)
    grads["head_consistency.w"], grads["head_consistency.b"] = dwc, dbc
    d_fused += dxc

    # fusion chain, unwound from the shallowest fused level upward
    pyramid = cache["pyramid"]
    d_pyr = [np.zeros_like(p) for p in pyramid]
    for l in range(2, n):
        fuse_in, mid, e_l, wc = cache["fuse"][l]
        f_l = pyramid[l - 2]
        d_f, d_e = fuse_weighted_concat_backward(f_l, e_l, wc, d_fused,
                                                 config.efpn.gamma_w)
        d_pyr[l - 2] += d_f
        d_mid, dwu, dbu = transpose_conv2d_backward(
            mid, params[f"fuse{l}.up.w"], d_e, stride=2, padding=config.efpn.up_pad)
        grads[f"fuse{l}.up.w"], grads[f"fuse{l}.up.b"] = dwu, dbu
        d_in, dwc2, dbc2 = conv2d_backward(
            fuse_in, params[f"fuse{l}.conv.w"], d_mid, stride=1,
            padding=config.efpn.conv_pad)
        grads[f"fuse{l}.conv.w"], grads[f"fuse{l}.conv.b"] = dwc2, dbc2
        d_fused = d_in
    d_pyr[-1] += d_fused                     # gradient reaching raw F^N

    # backbone chain
    acts, pre = cache["acts"], cache["pre"]
    d_act = d_pyr[-1]
    for i in range(n, 0, -1):
        if 2 <= i < n:
            d_act = d_act + d_pyr[i - 2]
        d_z = d_act * silu_grad(pre[i - 1])
        d_prev, dw, db = conv2d_backward(acts[i - 1], params[f"conv{i}.w"], d_z,
                                         stride=2, padding=1)
        grads[f"conv{i}.w"], grads[f"conv{i}.b"] = dw, db
        d_act = d_prev
    return grads


def predict(params: dict[str, np.ndarray], config: ModelConfig,
            x: np.ndarray) -> ModelOutput:
    out, _ = forward(params, x, config)
    return out


def fake_scores(output: ModelOutput) -> np.ndarray:
    return sigmoid(output.logit)


# ---------------------------------------------------------------------------
# checkpoints: raw float64 blob + JSON sidecar listing tensors in order

def save_checkpoint(path: str | os.PathLike, params: dict[str, np.ndarray],
                    config: ModelConfig) -> None:
    path = os.fspath(path)
    meta = {"tensors": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
            "config": asdict(config)}
    with open(path, "wb") as fh:
        for v in params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], ModelConfig]:
    path = os.fspath(path)
    try:
        with open(path + ".json", "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        raw = np.fromfile(path, dtype="<f8")
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in meta["tensors"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = raw[offset:offset + size]
        if chunk.size != size:
            raise DataError(f"checkpoint {path}: truncated at tensor {entry['name']}")
        params[entry["name"]] = chunk.reshape(entry["shape"]).astype(np.float64)
        offset += size
    if offset != raw.size:
        raise DataError(f"checkpoint {path}: trailing bytes")
    cfg_d = meta["config"]
    config = ModelConfig(input_size=cfg_d["input_size"], in_channels=cfg_d["in_channels"],
                         channels=tuple(cfg_d["channels"]), efpn=EfpnConfig(**cfg_d["efpn"]))
    return params, config
