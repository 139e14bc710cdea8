"""Command-line interface.

Subcommands: generate | train | infer | eval | encode | visualize | ablate.
Every option can also come from a JSON config file (--config); explicit
flags win. Exit codes: 0 success, 2 configuration error, 3 data error.
Failures emit a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import mask_io, viz
from .data import GeneratorConfig, generate_dataset, load_dataset
from .errors import ConfigurationError, DataError
from .inference import segment_objects
from .losses import LossConfig
from .mask_ops import DistanceConfig, encode_distance_classes
from .metrics import evaluate_sequence
from .model import ModelConfig
from .train import (
    TrainConfig,
    format_ablation_table,
    load_checkpoint,
    run_ablation,
    train,
)


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags (None) from the JSON config file, if given."""
    if getattr(args, "config", None):
        file_values = json.loads(Path(args.config).read_text())
        for key, value in file_values.items():
            if getattr(args, key, None) is None:
                setattr(args, key, value)
    return args


def _v(args, name, default):
    value = getattr(args, name, None)
    return default if value is None else value


def cmd_generate(args) -> int:
    cfg = GeneratorConfig(
        height=_v(args, "height", 64),
        width=_v(args, "width", 96),
        num_objects=(_v(args, "min_objects", 1), _v(args, "max_objects", 3)),
        size_range=(_v(args, "min_size", 3), _v(args, "max_size", 16)),
        occluder_prob=_v(args, "occluder_prob", 0.3),
        seq_len_range=(_v(args, "min_length", 6), _v(args, "max_length", 10)),
        seed=_v(args, "seed", 0),
    )
    names = generate_dataset(cfg, _v(args, "num_sequences", 8), args.out)
    print(json.dumps({"sequences": names, "root": str(args.out)}))
    return 0


def _train_config(args) -> TrainConfig:
    dist = DistanceConfig(_v(args, "border_pixels", 20), _v(args, "bin_size", 1))
    multi_task = not getattr(args, "no_multi_task", False)
    model_cfg = ModelConfig(
        input_height=_v(args, "input_height", 64),
        input_width=_v(args, "input_width", 96),
        skip_memory_levels=_v(args, "skip_memory_levels", 2),
        distance_class_count=dist.class_count,
        distance_merge="concat" if multi_task else "none",
        scale_factor=_v(args, "scale_factor", 1.0),
    )
    loss_cfg = LossConfig(
        lambda_weight=_v(args, "lambda_weight", 0.8) if multi_task else 1.0,
        distance_config=dist,
    )
    return TrainConfig(
        learning_rate=_v(args, "learning_rate", 1e-5),
        batch_size=_v(args, "batch_size", 4),
        max_iterations=_v(args, "iterations", 1000),
        seq_len_range=(_v(args, "min_seq_len", 5), _v(args, "max_seq_len", 12)),
        seed=_v(args, "seed", 0),
        grad_clip_norm=getattr(args, "grad_clip", None),
        checkpoint_every=_v(args, "checkpoint_every", 500),
        augment=not getattr(args, "no_augment", False),
        loss_config=loss_cfg,
        model_config=model_cfg,
    )


def _load_for_training(args, cfg: TrainConfig):
    size = None
    if getattr(args, "resize", False):
        size = (cfg.model_config.input_height, cfg.model_config.input_width)
    dataset = load_dataset(args.data, input_size=size)
    if not dataset:
        raise DataError(f"no usable sequences under {args.data}")
    return dataset


def cmd_train(args) -> int:
    cfg = _train_config(args)
    dataset = _load_for_training(args, cfg)
    result = train(cfg, dataset, args.out, resume_from=getattr(args, "resume", None))
    print(json.dumps({"checkpoint": result["checkpoint"], "log": result["log"],
                      "final_loss": result["history"][-1]["loss"]
                      if result["history"] else None}))
    return 0


def cmd_infer(args) -> int:
    threshold = _v(args, "threshold", 0.5)
    if not 0.0 < threshold < 1.0:
        raise ConfigurationError("merge threshold must lie in (0, 1)")
    model, _ = load_checkpoint(args.checkpoint)
    frame_paths = sorted(Path(args.frames).glob("*.png"))
    if len(frame_paths) < 2:
        raise DataError("need at least 2 frames")
    frames = [np.asarray(Image.open(p).convert("RGB")) for p in frame_paths]
    first_mask = mask_io.read_label_png(args.first_mask)
    if first_mask.shape != frames[0].shape[:2]:
        raise DataError("first mask does not match frame size")
    merged, probs = segment_objects(model, frames, first_mask,
                                    merge_threshold=threshold)
    out = Path(args.out)
    for t, labels in enumerate(merged):
        mask_io.write_label_png(out / frame_paths[t + 1].name, labels)
    if getattr(args, "heatmaps", False):
        for obj, prob in probs.items():
            for t in range(prob.shape[0]):
                img = viz.probability_heatmap(prob[t])
                path = out / "heatmaps" / f"object_{obj}" / frame_paths[t + 1].name
                path.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(img).save(path)
    print(json.dumps({"frames_written": len(merged), "objects": list(probs)}))
    return 0


def cmd_eval(args) -> int:
    gt_root = Path(args.gt)
    pred_root = Path(args.pred)
    tolerance = getattr(args, "tolerance", None)
    rows = []
    seq_dirs = sorted(d for d in gt_root.iterdir() if d.is_dir())
    if not seq_dirs:
        raise DataError(f"no sequences under {gt_root}")
    for seq_dir in seq_dirs:
        gt_paths = sorted(seq_dir.glob("*.png"))
        if len(gt_paths) < 2:
            continue
        gts = [mask_io.read_label_png(p) for p in gt_paths]
        preds = [gts[0]]  # frame 0 is the given mask in one-shot VOS
        for p in gt_paths[1:]:
            pp = pred_root / seq_dir.name / p.name
            if not pp.exists():
                pp = pred_root / p.name if len(seq_dirs) == 1 else pp
            if not pp.exists():
                raise DataError(f"missing prediction {pp}")
            preds.append(mask_io.read_label_png(pp))
        for obj in sorted(int(i) for i in np.unique(gts[0]) if i != 0):
            score = evaluate_sequence([p == obj for p in preds],
                                      [g == obj for g in gts],
                                      skip_first=True, tolerance=tolerance)
            rows.append({"sequence": seq_dir.name, "object": obj,
                         "j": score.j_mean, "f": score.f_mean,
                         "overall": score.overall})
    if not rows:
        raise DataError("nothing to evaluate")
    report = {
        "per_object": rows,
        "j_mean": float(np.mean([r["j"] for r in rows])),
        "f_mean": float(np.mean([r["f"] for r in rows])),
        "overall": float(np.mean([r["overall"] for r in rows])),
    }
    if getattr(args, "out", None):
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2))
    print(json.dumps({k: report[k] for k in ("j_mean", "f_mean", "overall")}))
    return 0


def cmd_encode(args) -> int:
    config = DistanceConfig(_v(args, "border_pixels", 20), _v(args, "bin_size", 1))
    labels = mask_io.read_label_png(args.mask)
    obj = _v(args, "object_id", 1)
    mask = labels == obj
    if not mask.any():
        raise DataError(f"object id {obj} not present in mask")
    class_map = encode_distance_classes(mask, config)
    mask_io.write_class_map(args.out, class_map)
    print(json.dumps({"out": str(args.out), "class_count": config.class_count}))
    return 0


def cmd_visualize(args) -> int:
    path = Path(args.input)
    if path.suffix == ".npy":
        img = viz.probability_heatmap(np.load(path))
    elif path.with_suffix(path.suffix + ".json").exists():
        img = viz.class_map_heatmap(mask_io.read_class_map(path))
    else:
        img = viz.probability_heatmap(np.asarray(Image.open(path).convert("L"),
                                                 dtype=float) / 255.0)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(args.out)
    print(json.dumps({"out": str(args.out)}))
    return 0


def cmd_ablate(args) -> int:
    cfg = _train_config(args)
    train_set = _load_for_training(args, cfg)
    eval_args = argparse.Namespace(data=args.eval_data, resize=getattr(args, "resize", False))
    eval_set = _load_for_training(eval_args, cfg)
    seeds = [int(s) for s in _v(args, "seeds", "0,1,2").split(",")]
    report = run_ablation(train_set, eval_set, cfg, seeds=seeds,
                          out_path=getattr(args, "out", None))
    print(format_ablation_table(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqvos")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="JSON config file; flags win")
        return p

    p = add("generate", cmd_generate, help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    for flag, typ in [("--num-sequences", int), ("--height", int), ("--width", int),
                      ("--min-objects", int), ("--max-objects", int),
                      ("--min-size", int), ("--max-size", int),
                      ("--min-length", int), ("--max-length", int),
                      ("--occluder-prob", float), ("--seed", int)]:
        p.add_argument(flag, type=typ)

    def add_train_flags(p):
        for flag, typ in [("--iterations", int), ("--batch-size", int),
                          ("--learning-rate", float), ("--seed", int),
                          ("--scale-factor", float), ("--skip-memory-levels", int),
                          ("--lambda-weight", float), ("--border-pixels", int),
                          ("--bin-size", int), ("--min-seq-len", int),
                          ("--max-seq-len", int), ("--grad-clip", float),
                          ("--checkpoint-every", int), ("--input-height", int),
                          ("--input-width", int)]:
            p.add_argument(flag, type=typ)
        p.add_argument("--no-augment", action="store_true")
        p.add_argument("--no-multi-task", action="store_true")
        p.add_argument("--resize", action="store_true",
                       help="resize sequences to the configured input size")

    p = add("train", cmd_train, help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume")
    add_train_flags(p)

    p = add("infer", cmd_infer, help="segment a sequence from a first-frame mask")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--first-mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--heatmaps", action="store_true")

    p = add("eval", cmd_eval, help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.add_argument("--tolerance", type=int)

    p = add("encode", cmd_encode, help="distance-class encode a mask PNG")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--border-pixels", type=int)
    p.add_argument("--bin-size", type=int)
    p.add_argument("--object-id", type=int)

    p = add("visualize", cmd_visualize, help="render a heat-map PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = add("ablate", cmd_ablate, help="run the ablation grid")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", required=True)
    p.add_argument("--out")
    p.add_argument("--seeds")
    add_train_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args = _merge_config(args)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        json.dump({"error": "configuration", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except DataError as exc:
        json.dump({"error": "data", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
