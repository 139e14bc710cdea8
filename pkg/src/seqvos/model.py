"""Sequence-to-sequence segmentation network with recurrent memory.

An initializer network turns the first frame + mask into initial
ConvLSTM states; a 5-stage encoder produces a feature pyramid; a
ConvLSTM at the bottleneck (and optionally in one or two additional
skip connections) carries the target through time; a 5-stage decoder
with learnable-weighted skip merging emits a segmentation probability
map and per-pixel distance-class logits.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, DataError


@dataclass(frozen=True)
class ModelConfig:
    input_height: int = 256
    input_width: int = 448
    encoder_channels: tuple[int, ...] = (64, 128, 256, 512, 512)
    bottleneck_channels: int = 512
    skip_memory_levels: int = 2
    rnn_kernel_sizes: tuple[int, ...] = (3, 3, 5)  # bottleneck, skip level 1, 2
    decoder_channels: tuple[int, ...] = (512, 256, 128, 64, 64)
    distance_class_count: int = 42
    distance_merge: str = "concat"  # "concat" | "none"
    scale_factor: float = 1.0

    def __post_init__(self):
        if len(self.encoder_channels) != 5 or len(self.decoder_channels) != 5:
            raise ConfigurationError("encoder and decoder need exactly 5 stages")
        if self.skip_memory_levels not in (0, 1, 2):
            raise ConfigurationError("skip_memory_levels must be 0, 1 or 2")
        if len(self.rnn_kernel_sizes) != 3 or any(k % 2 == 0 for k in self.rnn_kernel_sizes):
            raise ConfigurationError("rnn_kernel_sizes must be 3 odd integers")
        if self.input_height < 16 or self.input_width < 16:
            raise ConfigurationError("input size must be at least 16x16")
        if self.distance_merge not in ("concat", "none"):
            raise ConfigurationError("distance_merge must be 'concat' or 'none'")
        if self.distance_class_count < 4:
            raise ConfigurationError("need at least 4 distance classes")
        # weighted averaging at the skip levels needs matching widths
        enc, dec = self.enc_widths, self.dec_widths
        if enc[3] != dec[0] or enc[2] != dec[1]:
            raise ConfigurationError(
                "encoder stage-4/3 widths must match decoder stage-1/2 widths")

    def _scaled(self, c: int) -> int:
        return max(1, int(round(c * self.scale_factor)))

    @property
    def enc_widths(self) -> list[int]:
        return [self._scaled(c) for c in self.encoder_channels]

    @property
    def dec_widths(self) -> list[int]:
        return [self._scaled(c) for c in self.decoder_channels]

    @property
    def bottleneck_width(self) -> int:
        return self._scaled(self.bottleneck_channels)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("encoder_channels", "rnn_kernel_sizes", "decoder_channels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class ConvLSTMState(NamedTuple):
    h: torch.Tensor
    c: torch.Tensor


class ConvLSTMCell(nn.Module):
    """Standard convolutional LSTM cell (sigmoid gates, tanh candidate,
    no peepholes); all transforms convolve the [input, hidden] concat."""

    def __init__(self, input_channels: int, hidden_channels: int, kernel_size: int):
        super().__init__()
        self.hidden_channels = hidden_channels
        self.gates = nn.Conv2d(input_channels + hidden_channels,
                               4 * hidden_channels, kernel_size,
                               padding=kernel_size // 2)

    def forward(self, x: torch.Tensor, state: ConvLSTMState) -> ConvLSTMState:
        h, c = state
        if h.shape != c.shape or h.shape[-2:] != x.shape[-2:]:
            raise ConfigurationError("ConvLSTM state/input shape mismatch")
        gates = self.gates(torch.cat((x, h), dim=1))
        i, f, o, g = gates.chunk(4, dim=1)
        i, f, o = torch.sigmoid(i), torch.sigmoid(f), torch.sigmoid(o)
        g = torch.tanh(g)
        c_next = f * c + i * g
        h_next = o * torch.tanh(c_next)
        return ConvLSTMState(h_next, c_next)


def conv_lstm_step(cell: ConvLSTMCell, state: ConvLSTMState,
                   x: torch.Tensor) -> ConvLSTMState:
    """One recurrence step; new hidden state is bounded by 1 elementwise."""
    return cell(x, state)


class _Backbone(nn.Module):
    """5 conv stages, each halving resolution; returns all stage outputs."""

    def __init__(self, in_channels: int, widths: list[int]):
        super().__init__()
        convs = []
        prev = in_channels
        for w in widths:
            convs.append(nn.Conv2d(prev, w, 3, padding=1))
            prev = w
        self.convs = nn.ModuleList(convs)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            # ceil_mode keeps tiny inputs alive (16x16 still reaches a
            # 1x1 bottleneck); exact halving for sizes divisible by 32
            x = F.max_pool2d(F.relu(conv(x)), 2, ceil_mode=True)
            feats.append(x)
        return feats  # resolutions 1/2 .. 1/32


class Initializer(nn.Module):
    """Produces initial (h, c) for every memory level from frame 0 + mask.

    Bottleneck states come from two 1x1 projections of the backbone
    output; higher-scale states from upsample + conv stages mirroring
    the decoder, each followed by its own pair of 1x1 projections.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        enc, dec = config.enc_widths, config.dec_widths
        self.backbone = _Backbone(4, enc)
        self.h0 = nn.Conv2d(enc[4], config.bottleneck_width, 1)
        self.c0 = nn.Conv2d(enc[4], config.bottleneck_width, 1)
        ups, hs, cs = [], [], []
        prev = enc[4]
        for level in range(config.skip_memory_levels):
            ups.append(nn.Conv2d(prev, dec[level], 5, padding=2))
            hs.append(nn.Conv2d(dec[level], dec[level], 1))
            cs.append(nn.Conv2d(dec[level], dec[level], 1))
            prev = dec[level]
        self.up_convs = nn.ModuleList(ups)
        self.skip_h = nn.ModuleList(hs)
        self.skip_c = nn.ModuleList(cs)

    def forward(self, frame: torch.Tensor, mask: torch.Tensor) -> list[ConvLSTMState]:
        if mask.dim() == 3:
            mask = mask.unsqueeze(1)
        if mask.shape[-2:] != frame.shape[-2:]:
            raise ConfigurationError("first mask must align with first frame")
        feats = self.backbone(torch.cat((frame, mask.to(frame.dtype)), dim=1))
        feat = feats[-1]
        states = [ConvLSTMState(torch.tanh(self.h0(feat)), self.c0(feat))]
        x = feat
        sizes = [feats[3].shape[-2:], feats[2].shape[-2:]]
        for level, (up, h_head, c_head) in enumerate(
                zip(self.up_convs, self.skip_h, self.skip_c)):
            x = F.relu(up(F.interpolate(x, size=sizes[level], mode="bilinear",
                                        align_corners=False)))
            states.append(ConvLSTMState(torch.tanh(h_head(x)), c_head(x)))
        return states


class _SkipMerge(nn.Module):
    """Learnable scalar weighted average of branches followed by 1x1 conv.

    Branch weights are softmax-normalized; weighted averaging (instead
    of concatenation) keeps the channel count fixed, so zeroing one
    branch's normalized weight reproduces the smaller merge exactly.
    """

    def __init__(self, channels: int, num_branches: int):
        super().__init__()
        self.weights = nn.Parameter(torch.zeros(num_branches))
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, branches: list[torch.Tensor]) -> torch.Tensor:
        if len(branches) != self.weights.numel():
            raise ConfigurationError("merge branch count mismatch")
        w = torch.softmax(self.weights, dim=0)
        merged = sum(w[i] * b for i, b in enumerate(branches))
        return F.relu(self.proj(merged))


class Decoder(nn.Module):
    """5 bilinear-upsample + 5x5 conv stages with skip merging at the two
    highest-resolution encoder scales, then distance and segmentation heads."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        dec = config.dec_widths
        self.config = config
        convs = []
        prev = config.bottleneck_width
        for w in dec:
            convs.append(nn.Conv2d(prev, w, 5, padding=2))
            prev = w
        self.convs = nn.ModuleList(convs)
        self.merges = nn.ModuleList(
            _SkipMerge(dec[level], 3 if level < config.skip_memory_levels else 2)
            for level in range(2))
        k = config.distance_class_count
        self.dist_head = nn.Conv2d(dec[4], k, 1)
        seg_in = dec[4] + (k if config.distance_merge == "concat" else 0)
        self.seg_head = nn.Conv2d(seg_in, 1, 1)

    def forward(self, bottleneck_h: torch.Tensor, skip_feats: list[torch.Tensor],
                skip_memory_h: list[torch.Tensor], stage_sizes: list):
        if len(skip_memory_h) != self.config.skip_memory_levels:
            raise ConfigurationError("skip memory level count mismatch with config")
        x = bottleneck_h
        for stage, conv in enumerate(self.convs):
            x = F.relu(conv(F.interpolate(x, size=stage_sizes[stage], mode="bilinear",
                                          align_corners=False)))
            if stage < 2:
                branches = [x, skip_feats[stage]]
                if stage < len(skip_memory_h):
                    branches.append(skip_memory_h[stage])
                x = self.merges[stage](branches)
        dist_logits = self.dist_head(x)
        if self.config.distance_merge == "concat":
            seg_in = torch.cat((x, torch.softmax(dist_logits, dim=1)), dim=1)
        else:
            seg_in = x
        seg_prob = torch.sigmoid(self.seg_head(seg_in)).squeeze(1)
        return seg_prob, dist_logits


@dataclass
class SequencePrediction:
    """Predictions for frames 1..T of a sequence."""

    seg_probs: torch.Tensor  # (B, T, H, W), in (0, 1)
    dist_logits: torch.Tensor  # (B, T, K, H, W)


class SequenceSegmenter(nn.Module):
    """Full network: initializer + encoder + recurrent memories + decoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        enc, dec = config.enc_widths, config.dec_widths
        self.initializer = Initializer(config)
        self.encoder = _Backbone(3, enc)
        ks = config.rnn_kernel_sizes
        cells = [ConvLSTMCell(enc[4], config.bottleneck_width, ks[0])]
        rnn_inputs = (enc[3], enc[2])
        for level in range(config.skip_memory_levels):
            cells.append(ConvLSTMCell(rnn_inputs[level], dec[level], ks[1 + level]))
        self.cells = nn.ModuleList(cells)
        self.decoder = Decoder(config)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.xavier_uniform_(m.weight)
                nn.init.zeros_(m.bias)

    def _check_frame(self, frame: torch.Tensor):
        if frame.shape[-2] < 16 or frame.shape[-1] < 16:
            raise ConfigurationError("frame size must be at least 16x16")

    def initialize_states(self, first_frame: torch.Tensor,
                          first_mask: torch.Tensor) -> list[ConvLSTMState]:
        self._check_frame(first_frame)
        return self.initializer(first_frame, first_mask)

    def encode(self, frame: torch.Tensor):
        """Feature pyramid: (bottleneck at 1/32, [skip at 1/16, skip at 1/8])."""
        self._check_frame(frame)
        feats = self.encoder(frame)
        return feats[4], [feats[3], feats[2]], feats

    def step(self, frame: torch.Tensor, states: list[ConvLSTMState]):
        """Advance all memories by one frame and decode a prediction."""
        bottleneck, skips, feats = self.encode(frame)
        rnn_inputs = [bottleneck] + skips[: self.config.skip_memory_levels]
        new_states = [cell(x, s) for cell, x, s in zip(self.cells, rnn_inputs, states)]
        stage_sizes = [feats[3].shape[-2:], feats[2].shape[-2:],
                       feats[1].shape[-2:], feats[0].shape[-2:],
                       frame.shape[-2:]]
        seg_prob, dist_logits = self.decoder(
            new_states[0].h, skips, [s.h for s in new_states[1:]], stage_sizes)
        return (seg_prob, dist_logits), new_states

    def forward(self, frames: torch.Tensor, first_mask: torch.Tensor) -> SequencePrediction:
        """Run the model over a batch of sequences.

        frames: (B, T+1, 3, H, W); first_mask: (B, H, W). Frame 0 is
        input only; predictions cover frames 1..T.
        """
        if frames.dim() != 5 or frames.shape[1] < 2:
            raise DataError("need at least 2 frames per sequence")
        states = self.initialize_states(frames[:, 0], first_mask)
        seg, dist = [], []
        for t in range(1, frames.shape[1]):
            (seg_prob, dist_logits), states = self.step(frames[:, t], states)
            seg.append(seg_prob)
            dist.append(dist_logits)
        return SequencePrediction(torch.stack(seg, dim=1), torch.stack(dist, dim=1))
