"""Balanced segmentation loss, distance classification loss, and their
weighted combination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DataError
from .mask_ops import DistanceConfig, encode_distance_classes

PROB_EPS = 1e-7  # clamp for log() stability


@dataclass(frozen=True)
class LossConfig:
    lambda_weight: float = 0.8
    distance_config: DistanceConfig = field(default_factory=lambda: DistanceConfig(20, 1))
    distance_reduction: str = "mean"  # "mean" | "sum"

    def __post_init__(self):
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ConfigurationError("lambda_weight must lie in [0, 1]")
        if self.distance_reduction not in ("mean", "sum"):
            raise ConfigurationError("distance_reduction must be 'mean' or 'sum'")


def _as_bt(seg_probs: torch.Tensor, targets: torch.Tensor):
    if seg_probs.shape != targets.shape:
        raise DataError("probability/target shape mismatch")
    if seg_probs.dim() == 3:  # (T, H, W) -> (1, T, H, W)
        seg_probs = seg_probs.unsqueeze(0)
        targets = targets.unsqueeze(0)
    if seg_probs.dim() != 4:
        raise DataError("expected (T, H, W) or (B, T, H, W) inputs")
    return seg_probs, targets


def balanced_bce(seg_probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Class-balanced binary cross-entropy, summed over frames.

    Per frame, with beta = |background| / |pixels|:
        -beta * sum_fg log p  -  (1 - beta) * sum_bg log(1 - p)
    Frame terms are summed over the sequence and averaged over the
    batch. An all-background frame contributes zero by construction.
    """
    p, y = _as_bt(seg_probs, targets)
    y = y.to(p.dtype)
    p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    beta = 1.0 - y.mean(dim=(2, 3))  # (B, T)
    pos = (torch.log(p) * y).sum(dim=(2, 3))
    neg = (torch.log1p(-p) * (1.0 - y)).sum(dim=(2, 3))
    per_frame = -beta * pos - (1.0 - beta) * neg
    return per_frame.sum(dim=1).mean()


def distance_ce(dist_logits: torch.Tensor, targets: torch.Tensor,
                num_classes: int, reduction: str = "mean") -> torch.Tensor:
    """Categorical cross-entropy over pixels and frames against integer
    distance-class targets."""
    if dist_logits.dim() == 4:  # (T, K, H, W)
        dist_logits = dist_logits.unsqueeze(0)
        targets = targets.unsqueeze(0)
    if dist_logits.dim() != 5:
        raise DataError("expected (T, K, H, W) or (B, T, K, H, W) logits")
    if dist_logits.shape[2] != num_classes:
        raise DataError("logit channel count does not match class count")
    if targets.min() < 0 or targets.max() >= num_classes:
        raise DataError("distance class index out of range")
    b, t, k, h, w = dist_logits.shape
    logits = dist_logits.reshape(b * t, k, h, w)
    tgt = targets.reshape(b * t, h, w).long()
    return F.cross_entropy(logits, tgt, reduction=reduction)


def distance_targets(seg_targets: torch.Tensor,
                     config: DistanceConfig) -> torch.Tensor:
    """Distance-class maps derived from binary targets (no gradients)."""
    y = seg_targets.detach().cpu().numpy().astype(bool)
    flat = y.reshape(-1, *y.shape[-2:])
    maps = np.stack([encode_distance_classes(m, config).values for m in flat])
    return torch.from_numpy(maps.reshape(y.shape)).long()


def total_loss(seg_probs: torch.Tensor, dist_logits: torch.Tensor | None,
               seg_targets: torch.Tensor, config: LossConfig):
    """lambda * L_seg + (1 - lambda) * L_dist.

    Distance targets are encoded on the fly from the binary targets.
    Returns (total, l_seg, l_dist) so both components can be logged.
    """
    l_seg = balanced_bce(seg_probs, seg_targets)
    if dist_logits is None:
        l_dist = torch.zeros((), dtype=l_seg.dtype)
    else:
        tgt = distance_targets(seg_targets, config.distance_config)
        l_dist = distance_ce(dist_logits, tgt.to(dist_logits.device),
                             config.distance_config.class_count,
                             config.distance_reduction)
    lam = config.lambda_weight
    if lam == 1.0:
        total = l_seg
    elif lam == 0.0:
        total = l_dist
    else:
        total = lam * l_seg + (1.0 - lam) * l_dist
    return total, l_seg, l_dist
