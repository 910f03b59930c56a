"""Hyperparameter schedules, the EMA parameter update, and optimizers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, ParameterError, ShapeError, UsageError
from .nn import Module


@dataclass(frozen=True)
class ScheduleSpec:
    """Piecewise schedule evaluated per step over [0, total_steps).

    kinds:
      warmup-cosine  linear ``start -> base`` over ``warmup_steps``, then
                     cosine decay ``base -> final``;
      linear-ramp    linear ``start -> final`` over the first ``warmup_steps``
                     (quantized to units of ``quantize`` steps), then held;
      cosine-to-one  cosine ``base -> final`` over the whole run (EMA momentum);
      constant       ``base`` everywhere.
    """

    kind: str
    base: float
    total_steps: int
    warmup_steps: int = 0
    final: float = 0.0
    start: float = 0.0
    quantize: int = 1


def schedule_value(spec: ScheduleSpec, step: int) -> float:
    if not 0 <= step < spec.total_steps:
        raise UsageError(f"step {step} outside schedule range [0, {spec.total_steps})")
    if spec.kind == "constant":
        return spec.base
    if spec.kind == "warmup-cosine":
        if step < spec.warmup_steps:
            return spec.start + (spec.base - spec.start) * step / spec.warmup_steps
        span = max(spec.total_steps - spec.warmup_steps, 1)
        progress = (step - spec.warmup_steps) / span
        return spec.final + 0.5 * (spec.base - spec.final) * (1.0 + np.cos(np.pi * progress))
    if spec.kind == "linear-ramp":
        unit = step // spec.quantize
        ramp_units = spec.warmup_steps
        if unit >= ramp_units or ramp_units <= 1:
            return spec.final if unit >= ramp_units else spec.start
        return spec.start + (spec.final - spec.start) * unit / (ramp_units - 1)
    if spec.kind == "cosine-to-one":
        progress = step / spec.total_steps
        return spec.final + 0.5 * (spec.base - spec.final) * (1.0 + np.cos(np.pi * progress))
    raise ParameterError(f"unknown schedule kind {spec.kind!r}")


def ema_update(teacher: Module, student: Module, momentum: float) -> None:
    """theta' <- l * theta' + (1 - l) * theta, elementwise over all parameters.

    Applies to every parameter, heads and adapters included; the momentum
    model is never updated by an optimizer.
    """
    if not 0.0 <= momentum <= 1.0:
        raise ParameterError(f"EMA momentum must lie in [0, 1], got {momentum}")
    t_params = teacher.named_parameters()
    s_params = student.named_parameters()
    if len(t_params) != len(s_params):
        raise ShapeError("EMA: parameter trees differ in size")
    for (tn, tp), (sn, sp) in zip(t_params, s_params):
        if tn != sn or tp.shape != sp.shape:
            raise ShapeError(f"EMA: parameter mismatch {tn}{tp.shape} vs {sn}{sp.shape}")
        l = np.asarray(momentum, dtype=tp.data.dtype)
        tp.data = l * tp.data + (np.asarray(1.0, dtype=tp.data.dtype) - l) * sp.data


def _global_grad_norm(grads: list[np.ndarray]) -> float:
    total = 0.0
    for g in grads:
        total += float((g.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


class Optimizer:
    """Shared bookkeeping: named trainable parameters, NaN guard, clipping."""

    def __init__(self, module: Module, weight_decay: float = 0.0, clip_grad: float = 0.0):
        self.named = [(n, p) for n, p in module.named_parameters() if p.requires_grad]
        self.weight_decay = weight_decay
        self.clip_grad = clip_grad

    def _gather_grads(self) -> list[np.ndarray]:
        grads = []
        for name, p in self.named:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericsError(f"non-finite gradient in {name}; step aborted")
            grads.append(g)
        if self.clip_grad and self.clip_grad > 0:
            norm = _global_grad_norm(grads)
            if norm > self.clip_grad:
                scale = np.asarray(self.clip_grad / (norm + 1e-6), dtype=grads[0].dtype)
                grads = [g * scale for g in grads]
        return grads

    def _decays(self, p) -> float:
        # biases and norm gains (1-D parameters) are not decayed
        return self.weight_decay if p.data.ndim >= 2 else 0.0

    def zero_grad(self) -> None:
        for _, p in self.named:
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    """SGD with classical momentum and coupled weight decay."""

    def __init__(self, module: Module, momentum: float = 0.9, weight_decay: float = 0.0,
                 clip_grad: float = 0.0):
        super().__init__(module, weight_decay, clip_grad)
        self.momentum = momentum
        self.velocity = {n: np.zeros_like(p.data) for n, p in self.named}

    def step(self, lr: float) -> None:
        grads = self._gather_grads()
        for (name, p), g in zip(self.named, grads):
            dt = p.data.dtype
            wd = self._decays(p)
            if wd:
                g = g + np.asarray(wd, dtype=dt) * p.data
            v = np.asarray(self.momentum, dtype=dt) * self.velocity[name] + g
            self.velocity[name] = v
            p.data = p.data - np.asarray(lr, dtype=dt) * v
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {f"velocity/{n}": v for n, v in self.velocity.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for n in self.velocity:
            self.velocity[n] = arrays[f"velocity/{n}"]


class AdamW(Optimizer):
    """Adam with decoupled weight decay."""

    def __init__(self, module: Module, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0, clip_grad: float = 0.0):
        super().__init__(module, weight_decay, clip_grad)
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.named}
        self.v = {n: np.zeros_like(p.data) for n, p in self.named}

    def step(self, lr: float) -> None:
        grads = self._gather_grads()
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for (name, p), g in zip(self.named, grads):
            dt = p.data.dtype
            m = np.asarray(b1, dtype=dt) * self.m[name] + np.asarray(1 - b1, dtype=dt) * g
            v = np.asarray(b2, dtype=dt) * self.v[name] + np.asarray(1 - b2, dtype=dt) * (g * g)
            self.m[name] = m
            self.v[name] = v
            m_hat = m / np.asarray(bc1, dtype=dt)
            v_hat = v / np.asarray(bc2, dtype=dt)
            update = m_hat / (np.sqrt(v_hat) + np.asarray(self.eps, dtype=dt))
            wd = self._decays(p)
            new = p.data - np.asarray(lr * wd, dtype=dt) * p.data if wd else p.data
            p.data = new - np.asarray(lr, dtype=dt) * update
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"m/{n}": a for n, a in self.m.items()}
        out.update({f"v/{n}": a for n, a in self.v.items()})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for n in self.m:
            self.m[n] = arrays[f"m/{n}"]
            self.v[n] = arrays[f"v/{n}"]


def build_optimizer(kind: str, module: Module, weight_decay: float, clip_grad: float) -> Optimizer:
    if kind == "sgd":
        return SGD(module, momentum=0.9, weight_decay=weight_decay, clip_grad=clip_grad)
    if kind == "adamw":
        return AdamW(module, weight_decay=weight_decay, clip_grad=clip_grad)
    raise ParameterError(f"unknown optimizer {kind!r}")
