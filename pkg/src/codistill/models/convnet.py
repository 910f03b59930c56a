"""Small residual convolutional encoder producing token-set representations."""

from __future__ import annotations

import numpy as np

from .. import engine
from ..engine import Tensor
from ..errors import ConfigError
from ..nn import Conv2d, GroupNorm, Module
from .representation import Representation


class ResidualBlock(Module):
    """Pre-activation residual unit: x + conv3x3(gelu(norm(x)))."""

    def __init__(self, channels: int, groups: int, rng: np.random.Generator, dtype=np.float32):
        self.norm = GroupNorm(groups, channels, dtype=dtype)
        self.conv = Conv2d(channels, channels, 3, rng, stride=1, padding=1, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.conv(engine.gelu(self.norm(x)))


class ConvEncoder(Module):
    """Stem plus one stride-2 stage per entry of ``channels``.

    The final feature map is flattened to N = H'*W' tokens of width
    ``out_channels``; the pooled vector is the mean over those tokens.
    Group normalization keeps every sample independent of the rest of the
    batch, so momentum copies need no running statistics.
    """

    def __init__(self, channels: tuple[int, ...] = (32, 64, 128), out_channels: int = 128,
                 gn_groups: int = 8, rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stem = Conv2d(3, channels[0], 3, rng, stride=1, padding=1, dtype=dtype)
        self.stem_norm = GroupNorm(gn_groups, channels[0], dtype=dtype)
        downs, blocks = [], []
        prev = channels[0]
        for c in channels:
            downs.append(Conv2d(prev, c, 3, rng, stride=2, padding=1, dtype=dtype))
            blocks.append(ResidualBlock(c, gn_groups, rng, dtype=dtype))
            prev = c
        self.downs = downs
        self.down_norms = [GroupNorm(gn_groups, c, dtype=dtype) for c in channels]
        self.blocks = blocks
        self.project = (
            Conv2d(prev, out_channels, 1, rng, stride=1, padding=0, dtype=dtype)
            if out_channels != prev
            else None
        )
        self.total_stride = 2 ** len(channels)
        self.out_channels = out_channels
        self.stage_strides = [2 ** (i + 1) for i in range(len(channels))]
        self.last_stage_features: list[np.ndarray] | None = None

    def __call__(self, images: Tensor, capture_features: bool = False) -> Representation:
        _, _, h, w = images.shape
        if h % self.total_stride or w % self.total_stride:
            raise ConfigError(
                f"input {h}x{w} is not divisible by the encoder stride {self.total_stride}"
            )
        x = engine.gelu(self.stem_norm(self.stem(images)))
        captured: list[np.ndarray] = []
        for down, norm, block in zip(self.downs, self.down_norms, self.blocks):
            x = engine.gelu(norm(down(x)))
            x = block(x)
            if capture_features:
                captured.append(np.array(x.data, copy=True))
        if self.project is not None:
            x = self.project(x)
        self.last_stage_features = captured if capture_features else None
        b, c, hh, ww = x.shape
        tokens = x.reshape(b, c, hh * ww).transpose((0, 2, 1))
        pooled = engine.mean(tokens, axis=1)
        return Representation(tokens=tokens, pooled=pooled)
