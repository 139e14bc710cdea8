"""Sequence-to-sequence one-shot video object segmentation with
recurrent skip-memory and a border-distance auxiliary task."""

from .errors import ConfigurationError, DataError
from .losses import LossConfig, balanced_bce, distance_ce, total_loss
from .mask_ops import (
    DistanceClassMap,
    DistanceConfig,
    boundary_pixels,
    decode_to_binary,
    encode_distance_classes,
    merge_objects,
    quantize,
    signed_distance,
)
from .metrics import (
    FrameScore,
    SequenceScore,
    contour_accuracy,
    evaluate_sequence,
    region_similarity,
)
from .model import ConvLSTMCell, ConvLSTMState, ModelConfig, SequenceSegmenter

__all__ = [
    "ConfigurationError",
    "ConvLSTMCell",
    "ConvLSTMState",
    "DataError",
    "DistanceClassMap",
    "DistanceConfig",
    "FrameScore",
    "LossConfig",
    "ModelConfig",
    "SequenceScore",
    "SequenceSegmenter",
    "balanced_bce",
    "boundary_pixels",
    "contour_accuracy",
    "decode_to_binary",
    "distance_ce",
    "encode_distance_classes",
    "evaluate_sequence",
    "merge_objects",
    "quantize",
    "region_similarity",
    "signed_distance",
    "total_loss",
]
