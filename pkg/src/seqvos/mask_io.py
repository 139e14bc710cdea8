"""Reading and writing masks and class maps as PNG files.

Multi-object masks use indexed-palette PNGs where the pixel value is the
object id and 0 is background. Distance-class maps are written as
grayscale PNGs (pixel = class index) with a JSON sidecar holding the
encoding config.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .mask_ops import DistanceClassMap, DistanceConfig

# Distinct colors for the first few object ids; ids beyond the table cycle.
_PALETTE_BASE = [
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
]


def _palette() -> list[int]:
    flat = []
    for i in range(256):
        rgb = (0, 0, 0) if i == 0 else _PALETTE_BASE[1 + (i - 1) % (len(_PALETTE_BASE) - 1)]
        flat.extend(rgb)
    return flat


def write_label_png(path, labels) -> None:
    """Write a multi-label map as an indexed-palette PNG."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise DataError("label map must be 2-D")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise DataError("label ids must fit in [0, 255] for palette PNG")
    img = Image.fromarray(arr.astype(np.uint8), mode="P")
    img.putpalette(_palette())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)


def read_label_png(path) -> np.ndarray:
    """Read an indexed-palette (or grayscale) mask PNG as an int label grid."""
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        img = img.convert("P")
    return np.asarray(img, dtype=np.int64)


def write_class_map(path, class_map: DistanceClassMap) -> None:
    """Write a distance-class map as grayscale PNG + JSON config sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    v = np.asarray(class_map.values)
    if v.max(initial=0) > 255:
        raise DataError("class count exceeds grayscale PNG range")
    Image.fromarray(v.astype(np.uint8), mode="L").save(path)
    sidecar = {
        "border_pixels": class_map.config.border_pixels,
        "bin_size": class_map.config.bin_size,
        "class_count": class_map.config.class_count,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def read_class_map(path) -> DistanceClassMap:
    """Read a distance-class map written by write_class_map."""
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise DataError(f"missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    config = DistanceConfig(meta["border_pixels"], meta["bin_size"])
    values = np.asarray(Image.open(path), dtype=np.int64)
    return DistanceClassMap(values, config)
