"""Region similarity J, contour accuracy F, and sequence aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError
from .mask_ops import boundary_mask


@dataclass(frozen=True)
class FrameScore:
    j: float
    f: float

    @property
    def overall(self) -> float:
        return (self.j + self.f) / 2


@dataclass(frozen=True)
class SequenceScore:
    j_mean: float
    f_mean: float
    overall: float


def _check_pair(pred, gt):
    p = np.asarray(pred).astype(bool)
    g = np.asarray(gt).astype(bool)
    if p.shape != g.shape:
        raise DataError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def region_similarity(pred, gt) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    p, g = _check_pair(pred, gt)
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 1.0
    return float(np.count_nonzero(p & g)) / union


def default_tolerance(shape) -> int:
    """Boundary dilation radius: ceil of 0.8% of the image diagonal."""
    h, w = shape
    return int(math.ceil(0.008 * math.hypot(h, w)))


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= r * r


def contour_accuracy(pred, gt, tolerance: int | None = None) -> float:
    """Boundary F-measure after dilating each boundary by a disk.

    Precision/recall of boundary pixels within the other mask's dilated
    boundary; both boundaries empty -> 1.0, exactly one empty -> 0.0.
    """
    p, g = _check_pair(pred, gt)
    if tolerance is None:
        tolerance = default_tolerance(p.shape)
    if tolerance < 0:
        raise DataError("tolerance must be >= 0")
    pb = boundary_mask(p)
    gb = boundary_mask(g)
    np_b = int(pb.sum())
    ng_b = int(gb.sum())
    if np_b == 0 and ng_b == 0:
        return 1.0
    if np_b == 0 or ng_b == 0:
        return 0.0
    disk = _disk(tolerance)
    gb_dil = ndimage.binary_dilation(gb, structure=disk)
    pb_dil = ndimage.binary_dilation(pb, structure=disk)
    precision = float(np.count_nonzero(pb & gb_dil)) / np_b
    recall = float(np.count_nonzero(gb & pb_dil)) / ng_b
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def frame_score(pred, gt, tolerance: int | None = None) -> FrameScore:
    return FrameScore(
        j=region_similarity(pred, gt),
        f=contour_accuracy(pred, gt, tolerance),
    )


def evaluate_sequence(preds, gts, skip_first: bool = True,
                      tolerance: int | None = None) -> SequenceScore:
    """Average per-frame J and F over a sequence.

    Frame 0 is excluded by default since its mask is an input in the
    one-shot setting; overall is the mean of the two averages.
    """
    if len(preds) != len(gts):
        raise DataError("prediction/ground-truth length mismatch")
    if len(preds) < 2:
        raise DataError("need at least 2 frames")
    start = 1 if skip_first else 0
    scores = [frame_score(p, g, tolerance) for p, g in zip(preds[start:], gts[start:])]
    j_mean = float(np.mean([s.j for s in scores]))
    f_mean = float(np.mean([s.f for s in scores]))
    return SequenceScore(j_mean=j_mean, f_mean=f_mean, overall=(j_mean + f_mean) / 2.0)
