"""Encoder output bundle: per-view token set plus its pooled global vector."""

from __future__ import annotations

from dataclasses import dataclass

from ..engine import Tensor


@dataclass
class Representation:
    """Tokens have shape (B, N, C); pooled is their mean over N, shape (B, C)."""

    tokens: Tensor
    pooled: Tensor

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[1]

    @property
    def channels(self) -> int:
        return self.tokens.shape[2]
