"""Command-line surface wiring the pipeline end to end.

Every command resolves its full configuration, writes the snapshot next to
its outputs (``run_config.json`` or ``<file>.config.json``), and can be
replayed bit-identically with ``forgekit rerun <snapshot>``. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import report
from .errors import ConfigError, DataError, ForgekitError
from .imaging import load_image, save_image
from .labels import read_map_blob, write_map_blob
from .metrics import (PerturbationSpec, ScoredSet, metrics_report, perturb,
                      write_scores_csv)
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .rng import split_seed
from .synthesis import (GroundTruthBundle, SynthesisConfig, build_manifest,
                        bundle_from_record, read_manifest, write_manifest)
from .toydata import write_toy_corpus
from .train import TrainConfig, prepare_sample, train_toy
from .model import forward
from .nn import sigmoid


def _fail_on_forgekit_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ForgekitError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(exc.exit_code)
    return wrapper


def _write_snapshot(target: Path, command: str, cfg: dict) -> None:
    snap = {"command": command, "config": cfg}
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(snap, fh, indent=2, sort_keys=True)


def _parse_mix(text: str) -> dict[str, float]:
    mix = {}
    try:
        for part in text.split(","):
            key, val = part.split("=")
            mix[key.strip()] = float(val)
    except ValueError as exc:
        raise ConfigError(f"cannot parse mix {text!r} (want e.g. real=0.5,sbi=0.5)") from exc
    return mix


@click.group()
def main():
    """Pseudo-fake synthesis, ground-truth generation, toy training, evaluation."""


# ---------------------------------------------------------------------------
# manifest

def _run_manifest(cfg: dict) -> None:
    records, excluded = build_manifest(cfg["real_dir"], cfg["landmarks_dir"],
                                       cfg["mix"], cfg["seed"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(out, records)
    for path, reason in excluded:
        click.echo(f"excluded: {path} ({reason})", err=True)
    _write_snapshot(Path(str(out) + ".config.json"), "manifest", cfg)
    click.echo(f"wrote {len(records)} records to {out}")


@main.command("manifest")
@click.option("--real-dir", required=True)
@click.option("--landmarks-dir", required=True)
@click.option("--mix", default="real=0.5,sbi=0.5", show_default=True,
              help="comma-separated recipe weights, e.g. real=0.5,bi=0.25,sbi=0.25")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True)
@_fail_on_forgekit_error
def cmd_manifest(real_dir, landmarks_dir, mix, seed, out):
    """Build a deterministic shuffled manifest from a directory of real images."""
    _run_manifest({"real_dir": real_dir, "landmarks_dir": landmarks_dir,
                   "mix": _parse_mix(mix), "seed": seed, "out": out})


# ---------------------------------------------------------------------------
# synth

def _run_synth(cfg: dict) -> None:
    records = read_manifest(cfg["manifest"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    synth_cfg = SynthesisConfig.from_dict(cfg["synthesis"])
    index_lines = []
    for idx, record in enumerate(records):
        bundle = bundle_from_record(record, synth_cfg, size=cfg["size"])
        rid = f"{idx:05d}"
        save_image(out_dir / f"{rid}.png", bundle.image)
        for name in ("mask", "boundary", "heatmap", "consistency"):
            write_map_blob(out_dir / f"{rid}.{name}.f64", getattr(bundle, name))
        index_lines.append(json.dumps({
            "id": rid, "label": bundle.label,
            "anchor": list(bundle.anchor) if bundle.anchor else None,
            "record": asdict(record)}))
    with open(out_dir / "bundles.jsonl", "w", encoding="utf-8") as fh:
        fh.write("\n".join(index_lines) + "\n")
    _write_snapshot(out_dir / "run_config.json", "synth", cfg)
    click.echo(f"wrote {len(records)} bundles to {out_dir}")


@main.command("synth")
@click.option("--manifest", required=True)
@click.option("--out-dir", required=True)
@click.option("--size", type=int, default=384, show_default=True)
@click.option("--iou-threshold", type=float, default=0.7, show_default=True)
@_fail_on_forgekit_error
def cmd_synth(manifest, out_dir, size, iou_threshold):
    """Generate images and ground-truth bundles for every manifest record."""
    synth = SynthesisConfig(iou_threshold=iou_threshold)
    _run_synth({"manifest": manifest, "out_dir": out_dir, "size": size,
                "synthesis": asdict(synth)})


# ---------------------------------------------------------------------------
# train

def _run_train(cfg: dict) -> None:
    records = read_manifest(cfg["manifest"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    hyper = TrainConfig(**cfg["train"])
    synth_cfg = SynthesisConfig.from_dict(cfg["synthesis"])
    result = train_toy(records, hyper, synth_cfg)
    save_checkpoint(out_dir / "model.ckpt", result.params, result.model)
    with open(out_dir / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(result.log_lines) + "\n")
    report.training_curves_figure(result.log_lines, out_dir / "curves.png")
    _write_snapshot(out_dir / "run_config.json", "train", cfg)
    click.echo(f"final val AUC {result.val_auc:.4f}; "
               f"heatmap peak mean {result.val_heatmap_peak_mean:.4f}")


@main.command("train")
@click.option("--manifest", required=True)
@click.option("--out-dir", required=True)
@click.option("--epochs", type=int, default=60, show_default=True)
@click.option("--batch-size", type=int, default=10, show_default=True)
@click.option("--lr-peak", type=float, default=4e-3, show_default=True)
@click.option("--lambda1", type=float, default=10.0, show_default=True,
              help="heatmap loss weight")
@click.option("--lambda2", type=float, default=100.0, show_default=True,
              help="consistency loss weight")
@click.option("--gamma", type=float, default=2.0, show_default=True,
              help="focal exponent")
@click.option("--gamma-w", type=float, default=1.0, show_default=True,
              help="fusion suppression exponent")
@click.option("--smoothing-eps", type=float, default=0.1, show_default=True)
@click.option("--iou-threshold", type=float, default=0.7, show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_fail_on_forgekit_error
def cmd_train(manifest, out_dir, epochs, batch_size, lr_peak, lambda1, lambda2,
              gamma, gamma_w, smoothing_eps, iou_threshold, size, seed):
    """Train the toy detector on a manifest; writes checkpoint + metric log."""
    model = ModelConfig(input_size=size)
    model.efpn.gamma_w = gamma_w
    hyper = TrainConfig(epochs=epochs, batch_size=batch_size, lr_peak=lr_peak,
                        seed=seed, model=model)
    hyper.weights.lambda1 = lambda1
    hyper.weights.lambda2 = lambda2
    hyper.weights.gamma = gamma
    hyper.weights.smoothing_eps = smoothing_eps
    synth = SynthesisConfig(iou_threshold=iou_threshold)
    _run_train({"manifest": manifest, "out_dir": out_dir,
                "train": asdict(hyper), "synthesis": asdict(synth)})


# ---------------------------------------------------------------------------
# eval

def _run_eval(cfg: dict) -> None:
    params, model_cfg = load_checkpoint(cfg["checkpoint"])
    records = read_manifest(cfg["manifest"])
    synth_cfg = SynthesisConfig.from_dict(cfg["synthesis"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    scores, labels, ids, groups = [], [], [], []
    chunk = 16
    samples = [prepare_sample(r, synth_cfg, model_cfg) for r in records]
    for i in range(0, len(samples), chunk):
        x = np.stack([s.x for s in samples[i:i + chunk]])
        out, _ = forward(params, x, model_cfg)
        scores.extend(sigmoid(out.logit).tolist())
    for idx, record in enumerate(records):
        labels.append(record.label)
        ids.append(f"{idx:05d}")
        groups.append(Path(record.image_path).stem)

    scored = ScoredSet(np.array(scores), np.array(labels), groups=groups, ids=ids)
    write_scores_csv(out_dir / "scores.csv", scored)
    level = scored.video_level() if cfg["video_level"] else scored
    rep = metrics_report(level)
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(rep, fh, indent=2, sort_keys=True)
    report.roc_figure(level, out_dir / "roc.png")
    _write_snapshot(out_dir / "run_config.json", "eval", cfg)
    click.echo(json.dumps(rep, sort_keys=True))


@main.command("eval")
@click.option("--checkpoint", required=True)
@click.option("--manifest", required=True)
@click.option("--out-dir", required=True)
@click.option("--video-level", is_flag=True, default=False,
              help="aggregate frame scores per source image before scoring")
@click.option("--iou-threshold", type=float, default=0.7, show_default=True)
@_fail_on_forgekit_error
def cmd_eval(checkpoint, manifest, out_dir, video_level, iou_threshold):
    """Score a manifest with a checkpoint; writes metrics JSON, CSV, ROC plot."""
    synth = SynthesisConfig(iou_threshold=iou_threshold)
    _run_eval({"checkpoint": checkpoint, "manifest": manifest, "out_dir": out_dir,
               "video_level": video_level, "synthesis": asdict(synth)})


# ---------------------------------------------------------------------------
# perturb

def _run_perturb(cfg: dict) -> None:
    image_dir = Path(cfg["image_dir"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = PerturbationSpec(kind=cfg["kind"], severity=cfg["severity"])
    images = sorted(image_dir.glob("*.png"))
    if not images:
        raise DataError(f"no PNG images in {image_dir}")
    for idx, path in enumerate(images):
        img = load_image(path)
        out = perturb(img, spec, split_seed(cfg["seed"], idx))
        save_image(out_dir / path.name, out)
    _write_snapshot(out_dir / "run_config.json", "perturb", cfg)
    click.echo(f"perturbed {len(images)} images -> {out_dir}")


@main.command("perturb")
@click.option("--image-dir", required=True)
@click.option("--kind", required=True,
              type=click.Choice(["saturation", "contrast", "block", "noise",
                                 "blur", "pixelation"]))
@click.option("--severity", type=click.IntRange(0, 5), default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True)
@_fail_on_forgekit_error
def cmd_perturb(image_dir, kind, severity, seed, out_dir):
    """Apply one corruption kind at a severity level to a directory of images."""
    _run_perturb({"image_dir": image_dir, "kind": kind, "severity": severity,
                  "seed": seed, "out_dir": out_dir})


# ---------------------------------------------------------------------------
# viz

def _load_bundle(bundle_dir: Path, rid: str) -> GroundTruthBundle:
    index = bundle_dir / "bundles.jsonl"
    meta = None
    try:
        with open(index, "r", encoding="utf-8") as fh:
            for line in fh:
                entry = json.loads(line)
                if entry["id"] == rid:
                    meta = entry
                    break
    except OSError as exc:
        raise DataError(f"cannot read bundle index {index}: {exc}") from exc
    if meta is None:
        raise DataError(f"record {rid!r} not found in {index}")
    maps = {name: read_map_blob(bundle_dir / f"{rid}.{name}.f64")
            for name in ("mask", "boundary", "heatmap", "consistency")}
    return GroundTruthBundle(image=load_image(bundle_dir / f"{rid}.png"),
                             label=meta["label"],
                             anchor=tuple(meta["anchor"]) if meta["anchor"] else None,
                             **maps)


def _run_viz(cfg: dict) -> None:
    bundle = _load_bundle(Path(cfg["bundle_dir"]), cfg["record"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    report.bundle_overlay_figure(bundle, out)
    _write_snapshot(Path(str(out) + ".config.json"), "viz", cfg)
    click.echo(f"wrote {out}")


@main.command("viz")
@click.option("--bundle-dir", required=True, help="directory produced by `forgekit synth`")
@click.option("--record", required=True, help="record id, e.g. 00003")
@click.option("--out", required=True)
@_fail_on_forgekit_error
def cmd_viz(bundle_dir, record, out):
    """Render mask/boundary/heatmap/consistency overlays for one bundle."""
    _run_viz({"bundle_dir": bundle_dir, "record": record, "out": out})


# ---------------------------------------------------------------------------
# toydata + rerun

def _run_toydata(cfg: dict) -> None:
    image_dir, landmark_dir = write_toy_corpus(cfg["out_dir"], cfg["count"],
                                               cfg["size"], cfg["seed"])
    _write_snapshot(Path(cfg["out_dir"]) / "run_config.json", "toydata", cfg)
    click.echo(f"wrote {cfg['count']} images to {image_dir} (landmarks in {landmark_dir})")


@main.command("toydata")
@click.option("--out-dir", required=True)
@click.option("--count", type=int, default=100, show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_fail_on_forgekit_error
def cmd_toydata(out_dir, count, size, seed):
    """Generate a textured toy corpus (images + landmark files)."""
    _run_toydata({"out_dir": out_dir, "count": count, "size": size, "seed": seed})


_RUNNERS = {"manifest": _run_manifest, "synth": _run_synth, "train": _run_train,
            "eval": _run_eval, "perturb": _run_perturb, "viz": _run_viz,
            "toydata": _run_toydata}


@main.command("rerun")
@click.argument("snapshot")
@_fail_on_forgekit_error
def cmd_rerun(snapshot):
    """Replay a command from its run_config snapshot, bit-identically."""
    try:
        with open(snapshot, "r", encoding="utf-8") as fh:
            snap = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read snapshot {snapshot}: {exc}") from exc
    command = snap.get("command")
    if command not in _RUNNERS:
        raise ConfigError(f"snapshot has unknown command {command!r}")
    _RUNNERS[command](snap["config"])


if __name__ == "__main__":
    main()
