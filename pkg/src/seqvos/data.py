"""Synthetic moving-shape sequences, on-disk dataset I/O, per-object
batch sampling, and sequence-consistent augmentation.

Dataset layout on disk (one-shot VOS style):
    root/frames/<seq>/%05d.png        RGB frames
    root/annotations/<seq>/%05d.png   indexed-palette label maps
    root/manifest.json                generator seeds and params
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy import ndimage

from .errors import ConfigurationError, DataError
from .mask_io import read_label_png, write_label_png

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorConfig:
    height: int = 64
    width: int = 96
    num_objects: tuple[int, int] = (1, 3)
    shapes: tuple[str, ...] = ("disk", "rectangle", "triangle")
    size_range: tuple[int, int] = (3, 16)
    small_size_range: tuple[int, int] = (3, 8)  # band the first object is drawn from
    speed_range: tuple[float, float] = (0.5, 2.5)
    jitter: float = 0.3
    occluder_prob: float = 0.3
    seq_len_range: tuple[int, int] = (6, 10)
    seed: int = 0

    def __post_init__(self):
        if self.size_range[1] * 2 >= min(self.height, self.width):
            raise ConfigurationError("canvas too small for requested object sizes")
        if self.num_objects[0] < 1 or self.num_objects[0] > self.num_objects[1]:
            raise ConfigurationError("invalid object count range")


@dataclass
class SequenceSample:
    frames: list[np.ndarray]  # (H, W, 3) uint8
    masks: list[np.ndarray]  # (H, W) int, 0 = background
    object_ids: list[int]
    metadata: dict = field(default_factory=dict)


def rasterize_shape(shape: str, center, size: float, aspect: float,
                    height: int, width: int) -> np.ndarray:
    """Exact rasterization of one analytic shape onto the pixel grid."""
    cy, cx = center
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    hh = size / 2.0
    hw = size * aspect / 2.0
    if shape == "disk":
        return ((yy - cy) / hh) ** 2 + ((xx - cx) / hw) ** 2 <= 1.0
    if shape == "rectangle":
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    if shape == "triangle":  # upward triangle, apex at the top
        top, bottom = cy - hh, cy + hh
        frac = np.clip((yy - top) / (bottom - top), 0.0, 1.0)
        inside_rows = (yy >= top) & (yy <= bottom)
        return inside_rows & (np.abs(xx - cx) <= frac * hw)
    raise ConfigurationError(f"unknown shape {shape!r}")


def _simulate_tracks(rng, config: GeneratorConfig, n_frames: int, n_objects: int):
    objects = []
    for i in range(n_objects):
        lo, hi = config.small_size_range if i == 0 else config.size_range
        size = float(rng.uniform(lo, hi))
        shape = str(rng.choice(config.shapes))
        aspect = float(rng.uniform(0.6, 1.4))
        margin = size * max(1.0, aspect) / 2.0 + 1.0
        pos = np.array([rng.uniform(margin, config.height - margin),
                        rng.uniform(margin, config.width - margin)])
        angle = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(*config.speed_range)
        vel = speed * np.array([math.sin(angle), math.cos(angle)])
        track = [pos.copy()]
        for _ in range(n_frames - 1):
            pos = pos + vel + rng.normal(0.0, config.jitter, size=2)
            # reflective boundaries
            for ax, limit in ((0, config.height), (1, config.width)):
                if pos[ax] < margin:
                    pos[ax] = 2 * margin - pos[ax]
                    vel[ax] = -vel[ax]
                elif pos[ax] > limit - margin:
                    pos[ax] = 2 * (limit - margin) - pos[ax]
                    vel[ax] = -vel[ax]
            track.append(pos.copy())
        color = rng.integers(64, 256, size=3)
        objects.append({
            "shape": shape,
            "size": size,
            "aspect": aspect,
            "color": [int(c) for c in color],
            "track": [[float(p[0]), float(p[1])] for p in track],
        })
    return objects


def _render(config: GeneratorConfig, objects, occluder, n_frames: int,
            background: np.ndarray):
    frames, masks = [], []
    for t in range(n_frames):
        frame = background.copy()
        mask = np.zeros((config.height, config.width), dtype=np.int64)
        for i, obj in enumerate(objects):  # fixed z-order: later ids on top
            m = rasterize_shape(obj["shape"], obj["track"][t], obj["size"],
                                obj["aspect"], config.height, config.width)
            frame[m] = obj["color"]
            mask[m] = i + 1
        if occluder is not None:
            m = rasterize_shape("rectangle", occluder["track"][t],
                                occluder["size"], occluder["aspect"],
                                config.height, config.width)
            frame[m] = occluder["color"]
            mask[m] = 0
        frames.append(frame)
        masks.append(mask)
    return frames, masks


def generate_sequence(config: GeneratorConfig) -> SequenceSample:
    """Render a deterministic moving-shape sequence with exact masks.

    Objects keep a constant velocity plus bounded jitter and reflect off
    the canvas edges; an optional occluder bar sweeps across the scene.
    Every object is guaranteed visible in frame 0 (retries with fresh
    draws from the same seeded stream otherwise).
    """
    rng = np.random.default_rng(config.seed)
    n_frames = int(rng.integers(config.seq_len_range[0], config.seq_len_range[1] + 1))
    n_objects = int(rng.integers(config.num_objects[0], config.num_objects[1] + 1))
    background = (rng.integers(0, 40, size=(config.height, config.width, 3))
                  .astype(np.uint8))
    for _ in range(64):
        objects = _simulate_tracks(rng, config, n_frames, n_objects)
        occluder = None
        if rng.uniform() < config.occluder_prob:
            # vertical bar entering from the left after frame 0
            bar_w = max(4.0, config.width / 6.0)
            step = (config.width + 2 * bar_w) / max(1, n_frames - 1)
            occluder = {
                "size": float(2 * config.height),
                "aspect": float(bar_w / (2 * config.height)),
                "color": [int(c) for c in rng.integers(64, 256, size=3)],
                "track": [[config.height / 2.0, -bar_w + step * t - bar_w / 2.0]
                          for t in range(n_frames)],
            }
        frames, masks = _render(config, objects, occluder, n_frames, background)
        ids = list(range(1, n_objects + 1))
        if all((masks[0] == i).any() for i in ids):
            metadata = {
                "seed": config.seed,
                "config": dataclasses.asdict(config),
                "objects": objects,
                "occluder": occluder,
            }
            return SequenceSample(frames, masks, ids, metadata)
    raise ConfigurationError("could not place all objects visibly in frame 0")


def save_sequence(sample: SequenceSample, root, name: str) -> None:
    root = Path(root)
    for t, (frame, mask) in enumerate(zip(sample.frames, sample.masks)):
        fp = root / "frames" / name / f"{t:05d}.png"
        fp.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(frame).save(fp)
        write_label_png(root / "annotations" / name / f"{t:05d}.png", mask)


def generate_dataset(config: GeneratorConfig, num_sequences: int, root) -> list[str]:
    """Write num_sequences generated sequences plus a regeneration manifest."""
    root = Path(root)
    names = []
    manifest = {"sequences": {}}
    for i in range(num_sequences):
        cfg = dataclasses.replace(config, seed=config.seed + i)
        sample = generate_sequence(cfg)
        name = f"seq_{i:04d}"
        save_sequence(sample, root, name)
        manifest["sequences"][name] = dataclasses.asdict(cfg)
        names.append(name)
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return names


def _resize_sample(sample: SequenceSample, size: tuple[int, int]) -> SequenceSample:
    h, w = size
    frames = [np.asarray(Image.fromarray(f).resize((w, h), Image.BILINEAR))
              for f in sample.frames]
    masks = [np.asarray(Image.fromarray(m.astype(np.uint8)).resize((w, h), Image.NEAREST),
                        dtype=np.int64)
             for m in sample.masks]
    return SequenceSample(frames, masks, list(sample.object_ids), dict(sample.metadata))


def load_dataset(root, input_size: tuple[int, int] | None = None) -> list[SequenceSample]:
    """Load all sequences under root; frames resized bilinearly, masks with
    nearest neighbor. Sequences without a frame-0 annotation are skipped."""
    root = Path(root)
    frames_root = root / "frames"
    if not frames_root.is_dir():
        raise DataError(f"no frames directory under {root}")
    samples = []
    for seq_dir in sorted(frames_root.iterdir()):
        if not seq_dir.is_dir():
            continue
        frame_paths = sorted(seq_dir.glob("*.png"))
        ann_dir = root / "annotations" / seq_dir.name
        ann_paths = [ann_dir / p.name for p in frame_paths]
        if not frame_paths or not ann_paths[0].exists():
            log.warning("skipping %s: missing frame-0 annotation", seq_dir.name)
            continue
        frames = [np.asarray(Image.open(p).convert("RGB")) for p in frame_paths]
        masks = [read_label_png(p) if p.exists()
                 else np.zeros(frames[0].shape[:2], dtype=np.int64)
                 for p in ann_paths]
        ids = sorted(int(i) for i in np.unique(masks[0]) if i != 0)
        if not ids:
            log.warning("skipping %s: no object in frame 0", seq_dir.name)
            continue
        sample = SequenceSample(frames, masks, ids, {"name": seq_dir.name})
        if input_size is not None:
            sample = _resize_sample(sample, input_size)
        samples.append(sample)
    return samples


def augment(sample: SequenceSample, rng, flip_prob: float = 0.5,
            rotation_deg: float = 10.0, scale_range: tuple[float, float] = (0.9, 1.1),
            translate_frac: float = 0.1) -> SequenceSample:
    """Horizontal flip + affine warp, one draw applied to every frame.

    A single transform per sequence preserves the temporal signal; masks
    are warped with nearest neighbor so no new labels appear.
    """
    h, w = sample.frames[0].shape[:2]
    flip = rng.uniform() < flip_prob
    angle = math.radians(rng.uniform(-rotation_deg, rotation_deg))
    scale = rng.uniform(*scale_range)
    ty = rng.uniform(-translate_frac, translate_frac) * h
    tx = rng.uniform(-translate_frac, translate_frac) * w
    # output -> input mapping for ndimage.affine_transform
    rot = np.array([[math.cos(angle), -math.sin(angle)],
                    [math.sin(angle), math.cos(angle)]])
    matrix = rot.T / scale
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - matrix @ (center + np.array([ty, tx]))

    def warp_frame(f):
        if flip:
            f = f[:, ::-1]
        out = np.stack([ndimage.affine_transform(f[..., c].astype(float), matrix,
                                                 offset=offset, order=1, mode="nearest")
                        for c in range(f.shape[-1])], axis=-1)
        return np.clip(out, 0, 255).astype(np.uint8)

    def warp_mask(m):
        if flip:
            m = m[:, ::-1]
        return ndimage.affine_transform(m, matrix, offset=offset, order=0,
                                        mode="constant", cval=0)

    return SequenceSample(
        [warp_frame(f) for f in sample.frames],
        [warp_mask(m) for m in sample.masks],
        list(sample.object_ids),
        dict(sample.metadata),
    )


def sample_batch(samples: list[SequenceSample], batch_size: int,
                 seq_len_range: tuple[int, int], rng,
                 augment_fn=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Draw one training batch: each element is a single object from a
    distinct sequence, temporally cropped so the object is visible in the
    crop's first frame. Returns frames (B, T, 3, H, W) in [0, 1] and
    boolean masks (B, T, H, W)."""
    if batch_size > len(samples):
        raise ConfigurationError("batch_size exceeds number of sequences")
    max_len = min(len(s.frames) for s in samples)
    lo = min(seq_len_range[0], max_len)
    hi = min(seq_len_range[1], max_len)
    length = int(rng.integers(lo, hi + 1))
    chosen = rng.choice(len(samples), size=batch_size, replace=False)
    frames_out, masks_out = [], []
    for idx in chosen:
        sample = samples[idx]
        if augment_fn is not None:
            sample = augment_fn(sample, rng)
        for _ in range(32):
            obj = int(rng.choice(sample.object_ids))
            starts = [t for t in range(len(sample.frames) - length + 1)
                      if (sample.masks[t] == obj).any()]
            if starts:
                t0 = int(rng.choice(starts))
                break
        else:
            raise DataError(f"no valid crop found in sequence {idx}")
        frames = np.stack(sample.frames[t0:t0 + length]).astype(np.float32) / 255.0
        masks = np.stack([m == obj for m in sample.masks[t0:t0 + length]])
        frames_out.append(torch.from_numpy(frames).permute(0, 3, 1, 2))
        masks_out.append(torch.from_numpy(masks))
    return torch.stack(frames_out), torch.stack(masks_out)
