"""Module system and layers built on the autodiff engine.

Parameters are discovered by walking attributes in definition order, so
``named_parameters`` yields a stable, structural ordering that the EMA
update, optimizers, and checkpoints all share.
"""

from __future__ import annotations

import numpy as np

from . import engine
from .engine import Parameter, Tensor
from .errors import ConfigError


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) samples clamped to two standard deviations."""
    x = rng.standard_normal(shape) * std
    return np.clip(x, -2.0 * std, 2.0 * std).astype(dtype)


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Module:
    """Container of parameters and sub-modules."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out: list[tuple[str, Parameter]] = []
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Parameter):
                out.append((path, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(f"{path}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{path}.{i}."))
                    elif isinstance(item, Parameter):
                        out.append((f"{path}.{i}", item))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def astype(self, dtype) -> "Module":
        """Cast all parameters in place (used for 64-bit gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, std: float = 0.02, dtype=np.float32):
        self.weight = Parameter(trunc_normal(rng, (in_features, out_features), std, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return engine.linear(x, self.weight, self.bias)


class WeightNormLinear(Module):
    """Final projection layer with unit-normalized weight directions."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 std: float = 0.02, dtype=np.float32):
        self.weight = Parameter(trunc_normal(rng, (in_features, out_features), std, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return engine.weight_norm_linear(x, self.weight)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6, dtype=np.float32):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return engine.layer_norm(x, self.gamma, self.beta, self.eps)


class GroupNorm(Module):
    def __init__(self, groups: int, channels: int, eps: float = 1e-5, dtype=np.float32):
        if channels % groups:
            raise ConfigError(f"group count {groups} does not divide {channels} channels")
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.groups = groups
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return engine.group_norm(x, self.gamma, self.beta, self.groups, self.eps)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0,
                 bias: bool = False, dtype=np.float32):
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(
            he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, dtype)
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        y = engine.conv2d(x, self.weight, self.stride, self.padding)
        if self.bias is not None:
            y = y + self.bias.reshape(1, -1, 1, 1)
        return y


class TransformerBlock(Module):
    """Pre-norm multi-head self-attention followed by a GELU MLP, both residual.

    Attention rows are softmax-normalized; pass ``capture_attention`` to keep
    the last attention map (detached) in ``last_attention`` for analysis.
    ``mask_first_column`` removes the first token from every key set, which
    turns a search sequence back into plain self-attention over the rest.
    """

    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator,
                 mlp_ratio: float = 4.0, dtype=np.float32):
        if dim % n_heads:
            raise ConfigError(f"head count {n_heads} does not divide width {dim}")
        hidden = int(dim * mlp_ratio)
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.qkv = Linear(dim, 3 * dim, rng, dtype=dtype)
        self.proj = Linear(dim, dim, rng, dtype=dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.fc1 = Linear(dim, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, dim, rng, dtype=dtype)
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.last_attention: np.ndarray | None = None

    def __call__(self, x: Tensor, capture_attention: bool = False,
                 mask_first_column: bool = False) -> Tensor:
        b, n, c = x.shape
        h, d = self.n_heads, self.head_dim
        qkv = self.qkv(self.norm1(x)).reshape(b, n, 3, h, d).transpose((2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        scale = 1.0 / np.sqrt(d)
        scores = engine.matmul(q, k.transpose((0, 1, 3, 2))) * scale
        if mask_first_column:
            mask = np.zeros((1, 1, 1, n), dtype=x.dtype)
            mask[..., 0] = np.finfo(x.dtype).min / 2
            scores = scores + Tensor(mask)
        attn = engine.softmax_lastdim(scores)
        if capture_attention:
            self.last_attention = np.array(attn.data, copy=True)
        ctx = engine.matmul(attn, v).transpose((0, 2, 1, 3)).reshape(b, n, c)
        x = x + self.proj(ctx)
        x = x + self.fc2(engine.gelu(self.fc1(self.norm2(x))))
        return x
