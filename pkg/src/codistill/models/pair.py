"""Bundles of encoder + heads, and the online/momentum model pair."""

from __future__ import annotations

import copy

import numpy as np

from .. import engine
from ..engine import Parameter, Tensor
from ..errors import ConfigError
from ..nn import Module
from .convnet import ConvEncoder
from .heads import MlpHead, TokenHead
from .representation import Representation
from .vit import VitEncoder


class EncoderModel(Module):
    """One side of the pair: encoder, projection heads, partner adapter.

    ``adapter`` maps this model's pooled feature width onto the partner
    token head's width for the feature search.  It is a fixed random linear
    map (never trained: the search path is a stop-gradient target), or None
    when the widths already agree.
    """

    def __init__(self, encoder, mlp_head: MlpHead, token_head: TokenHead | None = None,
                 adapter: Parameter | None = None):
        self.encoder = encoder
        self.mlp_head = mlp_head
        self.token_head = token_head
        self.adapter = adapter

    def encode(self, images: Tensor, capture_attention: bool = False) -> Representation:
        if isinstance(self.encoder, VitEncoder):
            return self.encoder(images, capture_attention=capture_attention)
        return self.encoder(images)

    def adapt_query(self, pooled: Tensor) -> Tensor:
        """Map a pooled feature to the partner token-head width."""
        if self.adapter is None:
            return pooled
        return engine.matmul(pooled, self.adapter)

    @property
    def feature_dim(self) -> int:
        return self.encoder.out_channels if isinstance(self.encoder, ConvEncoder) else self.encoder.width


def momentum_copy(model: EncoderModel) -> EncoderModel:
    """Structural twin whose parameters are EMA-tracked, never optimized."""
    twin = copy.deepcopy(model)
    for p in twin.parameters():
        p.requires_grad = False
        p.grad = None
    return twin


class ModelPair:
    """The two online models plus their momentum counterparts."""

    def __init__(self, model1: EncoderModel, model2: EncoderModel):
        self.online = [model1, model2]
        self.momentum = [momentum_copy(model1), momentum_copy(model2)]

    def check_structure(self) -> None:
        for online, shadow in zip(self.online, self.momentum):
            names_a = [(n, p.shape) for n, p in online.named_parameters()]
            names_b = [(n, p.shape) for n, p in shadow.named_parameters()]
            if names_a != names_b:
                raise ConfigError("online and momentum models have diverging structures")


def make_adapter(own_dim: int, partner_width: int, rng: np.random.Generator,
                 dtype=np.float32) -> Parameter | None:
    """Fixed random query adapter; identity (None) when dimensions match."""
    if own_dim == partner_width:
        return None
    w = (rng.standard_normal((own_dim, partner_width)) / np.sqrt(own_dim)).astype(dtype)
    return Parameter(w, requires_grad=False)
