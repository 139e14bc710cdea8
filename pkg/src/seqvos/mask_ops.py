"""Non-neural mask mathematics.

Boundary extraction, signed truncated distance fields, distance-class
encoding/decoding and multi-object merging. Everything here is a pure
function over numpy arrays and safe to call concurrently.

Conventions (fixed for the whole package):
  * The boundary of a mask is the set of foreground pixels with at least
    one background 4-neighbor. Pixels touching the image border do not
    count the outside of the image as background.
  * The signed distance is +d inside the object, -d outside, truncated
    at radius R. When the boundary set is empty the field is constant
    +R / -R depending on the side.
  * With b = floor(R / s) bins per side, class indices run monotonically
    with the signed distance:
        0           outside, distance >= R
        1 .. b      outside bins, farthest to nearest
        b+1 .. 2b   inside bins, nearest to farthest
        2b+1        inside, distance >= R
    so class_count = 2*b + 2. Inside bin k owns [k*s, (k+1)*s), outside
    bins are mirrored half-open; a distance of exactly R saturates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DataError


@dataclass(frozen=True)
class DistanceConfig:
    """Truncation radius (border_pixels) and bin size of the class encoding."""

    border_pixels: int
    bin_size: int = 1

    def __post_init__(self):
        if self.border_pixels < 1:
            raise ConfigurationError("border_pixels must be a positive integer")
        if self.bin_size < 1 or self.bin_size > self.border_pixels:
            raise ConfigurationError("bin_size must be in [1, border_pixels]")

    @property
    def num_bins(self) -> int:
        return self.border_pixels // self.bin_size

    @property
    def class_count(self) -> int:
        return 2 * self.num_bins + 2


@dataclass(frozen=True)
class DistanceClassMap:
    """Integer class-index grid plus the config that defines its layout."""

    values: np.ndarray
    config: DistanceConfig

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise DataError("class map must be a 2-D grid")
        if v.size and (v.min() < 0 or v.max() >= self.config.class_count):
            raise DataError("class index out of range for config")


def _as_bool_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DataError("mask must be a non-degenerate 2-D grid")
    return m.astype(bool)


def boundary_mask(mask) -> np.ndarray:
    """Boolean grid marking foreground pixels with a background 4-neighbor."""
    m = _as_bool_mask(mask)
    # Pad with foreground so the image border itself never creates boundary.
    p = np.pad(m, 1, constant_values=True)
    has_bg = (~p[:-2, 1:-1]) | (~p[2:, 1:-1]) | (~p[1:-1, :-2]) | (~p[1:-1, 2:])
    return m & has_bg


def boundary_pixels(mask) -> set[tuple[int, int]]:
    """Boundary of the mask as a set of (row, col) coordinates."""
    rr, cc = np.nonzero(boundary_mask(mask))
    return set(zip(rr.tolist(), cc.tolist()))


def signed_distance(mask, border_pixels: int) -> np.ndarray:
    """Truncated signed Euclidean distance to the mask boundary.

    Positive inside the object, negative outside, magnitude clipped at
    border_pixels. An empty boundary set yields a constant +/-R field.
    """
    if border_pixels < 1:
        raise ConfigurationError("border_pixels must be >= 1")
    m = _as_bool_mask(mask)
    r = float(border_pixels)
    sign = np.where(m, 1.0, -1.0)
    q = boundary_mask(m)
    if not q.any():
        return sign * r
    dist = ndimage.distance_transform_edt(~q)
    return sign * np.minimum(dist, r)


def quantize(field, config: DistanceConfig) -> DistanceClassMap:
    """Bin a signed distance field into the monotone class layout."""
    f = np.asarray(field, dtype=float)
    r = config.border_pixels
    if f.size and np.abs(f).max() > r + 1e-9:
        raise ConfigurationError("field magnitude exceeds config.border_pixels")
    b = config.num_bins
    s = config.bin_size
    d = np.abs(f)
    # signbit distinguishes -0.0 (outside boundary-adjacent) from +0.0 (on it)
    inside = ~np.signbit(f)
    out_cls = np.clip(b + 1 - np.ceil(d / s).astype(np.int64), 0, b)
    out_cls[d >= r] = 0
    in_cls = b + 1 + np.minimum((d // s).astype(np.int64), b)
    in_cls[d >= r] = 2 * b + 1
    return DistanceClassMap(np.where(inside, in_cls, out_cls), config)


def encode_distance_classes(mask, config: DistanceConfig) -> DistanceClassMap:
    """Distance-class encoding of a binary mask (signed distance + binning)."""
    return quantize(signed_distance(mask, config.border_pixels), config)


def decode_to_binary(class_map: DistanceClassMap) -> np.ndarray:
    """Recover the binary mask: foreground iff the class is an inside class."""
    v = np.asarray(class_map.values)
    if v.size and (v.min() < 0 or v.max() >= class_map.config.class_count):
        raise DataError("class index out of range")
    return v >= class_map.config.num_bins + 1


def merge_objects(prob_maps, threshold: float = 0.5, shape=None) -> np.ndarray:
    """Merge per-object probability maps into a single label grid.

    Each pixel takes the id (1-based list position) of the most probable
    object, provided that probability reaches the threshold; ties go to
    the lowest object index; everything else is background (0).
    """
    maps = [np.asarray(p, dtype=float) for p in prob_maps]
    if not maps:
        if shape is None:
            raise DataError("empty map list needs an explicit output shape")
        return np.zeros(shape, dtype=np.int64)
    if any(p.shape != maps[0].shape for p in maps):
        raise DataError("probability maps must share dimensions")
    stack = np.stack(maps)
    best = np.argmax(stack, axis=0)  # first occurrence = lowest object index
    best_val = np.take_along_axis(stack, best[None], axis=0)[0]
    return np.where(best_val >= threshold, best + 1, 0).astype(np.int64)
