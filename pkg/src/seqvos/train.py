"""Training loop, learning-rate schedule, checkpointing, and the
ablation grid runner."""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import SequenceSample, augment, sample_batch
from .errors import ConfigurationError
from .inference import evaluate_model
from .losses import LossConfig, total_loss
from .mask_ops import DistanceConfig
from .model import ModelConfig, SequenceSegmenter


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    decay_factor: float = 0.99
    decay_every_epochs: int = 4
    plateau_window: int = 200
    batch_size: int = 4
    max_iterations: int = 1000
    seq_len_range: tuple[int, int] = (5, 12)
    seed: int = 0
    grad_clip_norm: float | None = None
    checkpoint_every: int = 500
    augment: bool = True
    loss_config: LossConfig = field(default_factory=LossConfig)
    model_config: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if min(self.learning_rate, self.decay_factor, self.batch_size,
               self.max_iterations, self.plateau_window,
               self.decay_every_epochs) <= 0:
            raise ConfigurationError("all training hyper-parameters must be positive")


def save_checkpoint(path, model, optimizer, train_config: TrainConfig,
                    iteration: int, rng_state=None) -> None:
    """Atomic checkpoint write (tmp file + rename) with a JSON manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "iteration": iteration,
        "torch_rng": torch.get_rng_state(),
        "numpy_rng": rng_state,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    manifest = {
        "iteration": iteration,
        "model_config": model.config.to_dict(),
        "train_config": _config_to_dict(train_config),
    }
    mpath = path.with_suffix(".manifest.json")
    tmpm = mpath.with_suffix(mpath.suffix + ".tmp")
    tmpm.write_text(json.dumps(manifest, indent=2))
    os.replace(tmpm, mpath)


def load_checkpoint(path):
    """Returns (model, payload dict). The manifest must sit next to the
    checkpoint and round-trips the model config."""
    path = Path(path)
    mpath = path.with_suffix(".manifest.json")
    if not mpath.exists():
        raise ConfigurationError(f"missing checkpoint manifest {mpath}")
    manifest = json.loads(mpath.read_text())
    model = SequenceSegmenter(ModelConfig.from_dict(manifest["model_config"]))
    payload = torch.load(path, weights_only=False)
    model.load_state_dict(payload["model"])
    return model, payload


def _config_to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def train(config: TrainConfig, dataset: list[SequenceSample], out_dir,
          resume_from=None, log_every: int = 1,
          stop_fn=None, stop_check_every: int = 100) -> dict:
    """Train a model with Adam; decay the learning rate by decay_factor
    every decay_every_epochs epochs once the smoothed loss has plateaued
    (< 1% improvement over plateau_window iterations).

    Writes line-delimited JSON logs and periodic checkpoints under
    out_dir; returns the final checkpoint path and loss history.
    """
    if not dataset:
        raise ConfigurationError("dataset is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    model = SequenceSegmenter(config.model_config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    start_iter = 0
    if resume_from is not None:
        model, payload = load_checkpoint(resume_from)
        if payload["optimizer"] is not None:
            optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
            optimizer.load_state_dict(payload["optimizer"])
        torch.set_rng_state(payload["torch_rng"])
        if payload["numpy_rng"] is not None:
            rng.bit_generator.state = payload["numpy_rng"]
        start_iter = payload["iteration"]

    iters_per_epoch = max(1, math.ceil(len(dataset) / config.batch_size))
    augment_fn = augment if config.augment else None
    log_path = out_dir / "train_log.jsonl"
    ckpt_path = out_dir / "checkpoint.pt"
    ema = None
    ema_history = []
    plateau = False
    plateau_iter = None
    lr = config.learning_rate
    history = []

    with open(log_path, "a" if resume_from else "w") as log_file:
        for it in range(start_iter, config.max_iterations):
            frames, masks = sample_batch(dataset, config.batch_size,
                                         config.seq_len_range, rng, augment_fn)
            pred = model(frames, masks[:, 0].float())
            loss, l_seg, l_dist = total_loss(pred.seg_probs, pred.dist_logits,
                                             masks[:, 1:], config.loss_config)
            if not torch.isfinite(loss):
                save_checkpoint(out_dir / "diagnostic.pt", model, optimizer,
                                config, it, rng.bit_generator.state)
                raise FloatingPointError(f"non-finite loss at iteration {it}")
            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip_norm is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
            optimizer.step()

            value = float(loss.detach())
            ema = value if ema is None else 0.95 * ema + 0.05 * value
            ema_history.append(ema)
            if not plateau and len(ema_history) > config.plateau_window:
                old = ema_history[-1 - config.plateau_window]
                if old - ema < 0.01 * abs(old):
                    plateau = True
                    plateau_iter = it
            if plateau:
                decay_steps = (it - plateau_iter) // (config.decay_every_epochs
                                                      * iters_per_epoch)
                lr = config.learning_rate * config.decay_factor ** decay_steps
                for group in optimizer.param_groups:
                    group["lr"] = lr

            record = {"iteration": it, "loss": value,
                      "loss_seg": float(l_seg.detach()),
                      "loss_dist": float(l_dist.detach()), "lr": lr}
            history.append(record)
            if (it + 1) % log_every == 0:
                log_file.write(json.dumps(record) + "\n")
            if (it + 1) % config.checkpoint_every == 0:
                save_checkpoint(ckpt_path, model, optimizer, config, it + 1,
                                rng.bit_generator.state)
            if (stop_fn is not None and (it + 1) % stop_check_every == 0
                    and stop_fn(model, it + 1)):
                break
        save_checkpoint(ckpt_path, model, optimizer, config,
                        history[-1]["iteration"] + 1 if history else start_iter,
                        rng.bit_generator.state)
    return {"checkpoint": str(ckpt_path), "log": str(log_path),
            "history": history, "model": model}


ABLATION_DISTANCE_CONFIGS = ((20, 10), (20, 1), (10, 1))


def run_ablation(train_dataset: list[SequenceSample],
                 eval_dataset: list[SequenceSample],
                 base_config: TrainConfig, seeds=(0, 1, 2),
                 out_path=None) -> dict:
    """Full grid: skip-memory levels x multi-task on/off x (border, bin).

    Each cell is trained from scratch per seed and scored on the held-out
    set; the report carries mean and spread of J, F, and overall.
    """
    cells = []
    for skip in (0, 1, 2):
        for multi_task in (False, True):
            for border, bin_size in ABLATION_DISTANCE_CONFIGS:
                dist_cfg = DistanceConfig(border, bin_size)
                model_cfg = dataclasses.replace(
                    base_config.model_config,
                    skip_memory_levels=skip,
                    distance_class_count=dist_cfg.class_count,
                    distance_merge="concat" if multi_task else "none")
                loss_cfg = dataclasses.replace(
                    base_config.loss_config,
                    lambda_weight=base_config.loss_config.lambda_weight
                    if multi_task else 1.0,
                    distance_config=dist_cfg)
                runs = []
                for seed in seeds:
                    cfg = dataclasses.replace(base_config, seed=seed,
                                              model_config=model_cfg,
                                              loss_config=loss_cfg)
                    with tempfile.TemporaryDirectory() as tmp:
                        result = train(cfg, train_dataset, tmp, log_every=10**9)
                    report = evaluate_model(result["model"], eval_dataset)
                    runs.append({"seed": seed, "j": report["j_mean"],
                                 "f": report["f_mean"],
                                 "overall": report["overall"]})
                cells.append({
                    "skip_memory_levels": skip,
                    "multi_task": multi_task,
                    "border_pixels": border,
                    "bin_size": bin_size,
                    "class_count": dist_cfg.class_count,
                    "runs": runs,
                    "j_mean": float(np.mean([r["j"] for r in runs])),
                    "f_mean": float(np.mean([r["f"] for r in runs])),
                    "overall_mean": float(np.mean([r["overall"] for r in runs])),
                    "overall_std": float(np.std([r["overall"] for r in runs])),
                })
    report = {"seeds": list(seeds), "cells": cells}
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(json.dumps(report, indent=2))
    return report


def format_ablation_table(report: dict) -> str:
    """Render the ablation report as an aligned text table."""
    header = (f"{'skip':>4} {'multi-task':>10} {'border':>6} {'bin':>4} "
              f"{'classes':>7} {'J':>7} {'F':>7} {'overall':>15}")
    lines = [header, "-" * len(header)]
    for c in report["cells"]:
        lines.append(
            f"{c['skip_memory_levels']:>4} {str(c['multi_task']):>10} "
            f"{c['border_pixels']:>6} {c['bin_size']:>4} {c['class_count']:>7} "
            f"{c['j_mean']:>7.3f} {c['f_mean']:>7.3f} "
            f"{c['overall_mean']:>7.3f} +/- {c['overall_std']:.3f}")
    return "\n".join(lines)
