"""Color renderings of probability maps and distance-class maps."""

from __future__ import annotations

import numpy as np

from .mask_ops import DistanceClassMap


def probability_heatmap(prob) -> np.ndarray:
    """Blue (0) -> white (0.5) -> red (1) rendering of a [0,1] map."""
    p = np.clip(np.asarray(prob, dtype=float), 0.0, 1.0)
    r = np.where(p < 0.5, 2.0 * p, 1.0)
    g = np.where(p < 0.5, 2.0 * p, 2.0 * (1.0 - p))
    b = np.where(p < 0.5, 1.0, 2.0 * (1.0 - p))
    return (np.stack([r, g, b], axis=-1) * 255.0).round().astype(np.uint8)


def class_map_heatmap(class_map: DistanceClassMap) -> np.ndarray:
    """Distance classes on the same diverging scale: outside classes are
    bluish, inside classes reddish."""
    k = class_map.config.class_count
    norm = np.asarray(class_map.values, dtype=float) / (k - 1)
    return probability_heatmap(norm)
