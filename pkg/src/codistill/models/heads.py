"""Projection heads mapping encoder output to distillation logits."""

from __future__ import annotations

import numpy as np

from .. import engine
from ..engine import Tensor
from ..nn import Linear, Module, TransformerBlock, WeightNormLinear


class MlpHead(Module):
    """Four-layer projection: two GELU hidden layers, a bottleneck that is
    L2-normalized, and a weight-normalized linear map to the output logits."""

    def __init__(self, in_dim: int, out_dim: int, hidden_dim: int = 512,
                 bottleneck_dim: int = 128, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.fc1 = Linear(in_dim, hidden_dim, rng, dtype=dtype)
        self.fc2 = Linear(hidden_dim, hidden_dim, rng, dtype=dtype)
        self.fc3 = Linear(hidden_dim, bottleneck_dim, rng, dtype=dtype)
        self.last = WeightNormLinear(bottleneck_dim, out_dim, rng, dtype=dtype)
        self.out_dim = out_dim

    def bottleneck(self, z: Tensor) -> Tensor:
        """Unit-norm bottleneck vector fed to the final projection."""
        h = engine.gelu(self.fc1(z))
        h = engine.gelu(self.fc2(h))
        return engine.l2_normalize(self.fc3(h), axis=-1)

    def __call__(self, z: Tensor) -> Tensor:
        return self.last(self.bottleneck(z))


class TokenHead(Module):
    """Stack of self-attention blocks over a token set, pooled and projected.

    ``search_forward`` prepends a partner-provided query vector as token 0;
    the query steers attention but is excluded from the output pooling, so
    the logits summarize only the original tokens.
    """

    def __init__(self, width: int, out_dim: int, depth: int = 3, n_heads: int = 4,
                 mlp_ratio: float = 4.0, in_dim: int | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.proj_in = (
            Linear(in_dim, width, rng, dtype=dtype)
            if in_dim is not None and in_dim != width
            else None
        )
        self.blocks = [TransformerBlock(width, n_heads, rng, mlp_ratio, dtype=dtype) for _ in range(depth)]
        self.last = WeightNormLinear(width, out_dim, rng, dtype=dtype)
        self.width = width
        self.out_dim = out_dim

    def _project(self, tokens: Tensor) -> Tensor:
        return tokens if self.proj_in is None else self.proj_in(tokens)

    def __call__(self, tokens: Tensor, capture_attention: bool = False) -> Tensor:
        x = self._project(tokens)
        for block in self.blocks:
            x = block(x, capture_attention=capture_attention)
        return self.last(engine.mean(x, axis=1))

    def search_forward(self, query: Tensor, tokens: Tensor,
                       mask_query_column: bool = False) -> Tensor:
        """Cross-attention feature search: query-steered pooling of ``tokens``.

        ``query`` (B, width) must already be adapted to this head's width.
        With ``mask_query_column`` no token may attend to the query, which
        reduces the result to the plain forward over ``tokens``.
        """
        x = self._project(tokens)
        b, _, c = x.shape
        seq = engine.concat([query.reshape(b, 1, c), x], axis=1)
        for block in self.blocks:
            seq = block(seq, mask_first_column=mask_query_column)
        pooled = engine.mean(seq[:, 1:, :], axis=1)
        return self.last(pooled)
