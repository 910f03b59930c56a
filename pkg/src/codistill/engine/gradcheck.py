"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad

# Below this magnitude the comparison switches from relative to absolute;
# central differences on O(1) functions carry ~1e-10 noise in 64-bit.
_DENOM_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    n_checked: int
    worst_input: int = -1
    worst_index: tuple = ()

    def __bool__(self) -> bool:
        return self.passed


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tolerance: float = 1e-5,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` maps the given tensors to a scalar Tensor.  Steps are
    cbrt(machine eps) scaled by each coordinate's magnitude.  When
    ``sample`` is given, only that many coordinates (drawn uniformly over
    all inputs) are probed.  Failures are reported, never raised.
    """
    inputs = list(inputs)
    for t in inputs:
        t.grad = None
    out = fn(*inputs)
    out.backward()
    analytic = [
        np.zeros_like(t.data) if t.grad is None else np.array(t.grad, copy=True) for t in inputs
    ]

    coords = [(i, idx) for i, t in enumerate(inputs) for idx in np.ndindex(t.data.shape)]
    if sample is not None and sample < len(coords):
        rng = rng or np.random.default_rng(0)
        chosen = rng.choice(len(coords), size=sample, replace=False)
        coords = [coords[int(c)] for c in chosen]

    max_rel = 0.0
    worst = (-1, ())
    for i, idx in coords:
        t = inputs[i]
        orig = t.data[idx]
        h = np.cbrt(np.finfo(t.data.dtype).eps) * max(1.0, abs(float(orig)))
        with no_grad():
            t.data[idx] = orig + h
            f_plus = float(fn(*inputs).data)
            t.data[idx] = orig - h
            f_minus = float(fn(*inputs).data)
        t.data[idx] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        ana = float(analytic[i][idx])
        rel = abs(ana - numeric) / max(abs(ana), abs(numeric), _DENOM_FLOOR)
        if rel > max_rel:
            max_rel = rel
            worst = (i, idx)

    return GradCheckReport(
        max_rel_err=max_rel,
        passed=max_rel < tolerance,
        n_checked=len(coords),
        worst_input=worst[0],
        worst_index=worst[1],
    )
