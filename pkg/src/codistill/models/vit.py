"""Small vision transformer encoder without a class token.

Views whose size differs from the reference reuse the learned positional
grid through bilinear interpolation, so local crops share position
information with the full-size views.
"""

from __future__ import annotations

import numpy as np

from .. import engine
from ..engine import Parameter, Tensor
from ..errors import ConfigError
from ..nn import Conv2d, LayerNorm, Module, TransformerBlock, trunc_normal
from .representation import Representation


def bilinear_grid_matrix(src: int, dst: int, dtype=np.float32) -> np.ndarray:
    """Row-stochastic (dst^2, src^2) matrix resampling a square grid bilinearly."""
    m = np.zeros((dst * dst, src * src), dtype=np.float64)
    for oy in range(dst):
        for ox in range(dst):
            sy = (oy + 0.5) * src / dst - 0.5
            sx = (ox + 0.5) * src / dst - 0.5
            y0 = int(np.floor(sy))
            x0 = int(np.floor(sx))
            fy = sy - y0
            fx = sx - x0
            row = oy * dst + ox
            for dy, wy in ((0, 1.0 - fy), (1, fy)):
                for dx, wx in ((0, 1.0 - fx), (1, fx)):
                    yy = min(max(y0 + dy, 0), src - 1)
                    xx = min(max(x0 + dx, 0), src - 1)
                    m[row, yy * src + xx] += wy * wx
    return m.astype(dtype)


class VitEncoder(Module):
    def __init__(self, image_size: int = 32, patch_size: int = 4, width: int = 128,
                 depth: int = 4, n_heads: int = 4, mlp_ratio: float = 4.0,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if image_size % patch_size:
            raise ConfigError(f"patch size {patch_size} does not divide image size {image_size}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.patch_embed = Conv2d(3, width, patch_size, rng, stride=patch_size, bias=True, dtype=dtype)
        grid = image_size // patch_size
        self.pos_embed = Parameter(trunc_normal(rng, (grid * grid, width), 0.02, dtype))
        self.blocks = [TransformerBlock(width, n_heads, rng, mlp_ratio, dtype=dtype) for _ in range(depth)]
        self.norm = LayerNorm(width, dtype=dtype)
        self.patch_size = patch_size
        self.ref_grid = grid
        self.width = width
        self.depth = depth
        self.n_heads = n_heads
        self._interp_cache: dict[int, np.ndarray] = {}

    def _positions(self, grid: int, dtype) -> Tensor:
        if grid == self.ref_grid:
            return self.pos_embed
        mat = self._interp_cache.get(grid)
        if mat is None:
            mat = bilinear_grid_matrix(self.ref_grid, grid, dtype)
            self._interp_cache[grid] = mat
        return engine.matmul(Tensor(mat.astype(dtype, copy=False)), self.pos_embed)

    def __call__(self, images: Tensor, capture_attention: bool = False) -> Representation:
        _, _, h, w = images.shape
        if h % self.patch_size or w % self.patch_size:
            raise ConfigError(f"patch size {self.patch_size} does not divide input {h}x{w}")
        if h != w:
            raise ConfigError("encoder expects square inputs")
        x = self.patch_embed(images)
        b, c, gh, gw = x.shape
        tokens = x.reshape(b, c, gh * gw).transpose((0, 2, 1))
        pos = self._positions(gh, images.dtype).reshape(1, gh * gw, c)
        tokens = tokens + pos
        for block in self.blocks:
            tokens = block(tokens, capture_attention=capture_attention)
        tokens = self.norm(tokens)
        pooled = engine.mean(tokens, axis=1)
        return Representation(tokens=tokens, pooled=pooled)

    def attention_maps(self) -> np.ndarray:
        """Stacked per-layer attention of the most recent captured forward.

        Shape (depth, B, heads, N, N); rows sum to one.
        """
        maps = [blk.last_attention for blk in self.blocks]
        if any(m is None for m in maps):
            raise ConfigError("no attention maps captured; run forward with capture_attention=True")
        return np.stack(maps)
