"""Loss algebra for collaborative self-distillation.

Teachers are momentum-model outputs: centered, sharpened at the teacher
temperature, and treated as constants.  Students are online-model logits,
consumed through a fused log-softmax at the student temperature so the
sharpest temperatures stay overflow-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tensor
from .errors import ParameterError, UsageError


@dataclass
class LossWeights:
    """Per-model weight of the cross-distillation term."""

    lambda1: float = 0.1
    lambda2: float = 1.0

    def __post_init__(self):
        for name, value in (("lambda1", self.lambda1), ("lambda2", self.lambda2)):
            if not 0.0 <= value <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {value}")

    def for_model(self, index: int) -> float:
        return self.lambda1 if index == 0 else self.lambda2


@dataclass
class LossBreakdown:
    """Scalar loss terms of one model for one step.

    Identities hold exactly as floating-point computed:
    self_total = self_mlp + self_token, cross_total = cross_mlp + cross_search,
    total = self_total + lam * cross_total.
    """

    self_mlp: float
    self_token: float
    cross_mlp: float
    cross_search: float
    self_total: float
    cross_total: float
    total: float

    def to_dict(self) -> dict:
        return {
            "self_mlp": self.self_mlp,
            "self_token": self.self_token,
            "cross_mlp": self.cross_mlp,
            "cross_search": self.cross_search,
            "self_total": self.self_total,
            "cross_total": self.cross_total,
            "total": self.total,
        }


class CenterState:
    """EMA of teacher batch-mean logits, one vector per (model, head).

    Updated once per step from momentum-model outputs only; teacher
    sharpening subtracts the center before the softmax.
    """

    def __init__(self, keys: tuple[str, ...], dim: int, momentum: float = 0.9,
                 dtype=np.float32):
        if not 0.0 <= momentum <= 1.0:
            raise ParameterError(f"center momentum must lie in [0, 1], got {momentum}")
        self.momentum = momentum
        self.centers = {k: np.zeros(dim, dtype=dtype) for k in keys}

    def get(self, key: str) -> np.ndarray:
        return self.centers[key]

    def update(self, key: str, teacher_logits: np.ndarray) -> None:
        self.centers[key] = center_update(self.centers[key], teacher_logits, self.momentum)


def center_update(center: np.ndarray, teacher_batch_logits: np.ndarray, momentum: float) -> np.ndarray:
    """New center: momentum * center + (1 - momentum) * batch mean."""
    if not 0.0 <= momentum <= 1.0:
        raise ParameterError(f"center momentum must lie in [0, 1], got {momentum}")
    if teacher_batch_logits.ndim != 2 or teacher_batch_logits.shape[0] == 0:
        raise UsageError("center_update needs a non-empty (batch, dim) array")
    m = np.asarray(momentum, dtype=center.dtype)
    return m * center + (np.asarray(1.0, dtype=center.dtype) - m) * teacher_batch_logits.mean(axis=0)


def sharpen(logits: Tensor, temperature: float) -> Tensor:
    """Temperature softmax over the last dimension."""
    return engine.softmax_lastdim(logits, temperature)


def teacher_probs(logits, center: np.ndarray, temperature: float) -> Tensor:
    """Centered, sharpened teacher distribution as a constant tensor."""
    if temperature <= 0:
        raise ParameterError(f"teacher temperature must be positive, got {temperature}")
    raw = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    z = (raw - center) / np.asarray(temperature, dtype=raw.dtype)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return Tensor(e / e.sum(axis=-1, keepdims=True))


def soft_cross_entropy(target_probs, probs: Tensor) -> Tensor:
    """-sum(t * log(s)) over the last dim, averaged over leading dims.

    Both arguments are probability tensors; gradient flows only into
    ``probs`` (the target is treated as a constant).
    """
    t = target_probs.detach() if isinstance(target_probs, Tensor) else Tensor(np.asarray(target_probs))
    per_sample = engine.sum(t * engine.log(probs), axis=-1)
    return -engine.mean(per_sample)


def soft_cross_entropy_logits(target_probs, student_logprobs: Tensor) -> Tensor:
    """Same loss, consuming precomputed student log-probabilities."""
    t = target_probs.detach() if isinstance(target_probs, Tensor) else Tensor(np.asarray(target_probs))
    per_sample = engine.sum(t * student_logprobs, axis=-1)
    return -engine.mean(per_sample)


def student_logprobs(student_logits: list[Tensor], temperature: float) -> list[Tensor]:
    return [engine.log_softmax_lastdim(s, temperature) for s in student_logits]


def multiview_distillation_loss(teacher_probs_per_view: list, student_logits: list[Tensor],
                                student_temp: float) -> Tensor:
    """Mean soft cross-entropy over all (teacher view g, student view v != g) pairs.

    Teachers cover the global views only; students may include local views.
    The two-view case reduces to the symmetric half-sum form.
    """
    if len(teacher_probs_per_view) < 2:
        raise UsageError("multiview distillation needs at least 2 teacher (global) views")
    logprobs = student_logprobs(student_logits, student_temp)
    total = None
    n_terms = 0
    for g, t in enumerate(teacher_probs_per_view):
        for v, lp in enumerate(logprobs):
            if v == g:
                continue
            term = soft_cross_entropy_logits(t, lp)
            total = term if total is None else total + term
            n_terms += 1
    return total * (1.0 / n_terms)


def paired_search_loss(search_teacher_probs: list, student_logits: list[Tensor],
                       student_temp: float) -> Tensor:
    """Mean soft cross-entropy over same-index (search teacher, student) pairs.

    The teacher for student view v is the partner search output queried by
    this model's own view-v feature.
    """
    if not search_teacher_probs:
        raise UsageError("search loss called without search outputs")
    if len(search_teacher_probs) != len(student_logits):
        raise UsageError(
            f"{len(search_teacher_probs)} search outputs vs {len(student_logits)} student views"
        )
    logprobs = student_logprobs(student_logits, student_temp)
    total = None
    for t, lp in zip(search_teacher_probs, logprobs):
        term = soft_cross_entropy_logits(t, lp)
        total = term if total is None else total + term
    return total * (1.0 / len(search_teacher_probs))


def combine_losses(self_loss: Tensor, cross_loss: Tensor | None, lam: float) -> Tensor:
    """Total per-model objective: self + lambda * cross."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"cross-distillation weight must lie in [0, 1], got {lam}")
    if cross_loss is None:
        return self_loss
    return self_loss + lam * cross_loss


def teacher_entropy(logits: np.ndarray, center: np.ndarray, temperature: float) -> float:
    """Mean Shannon entropy of the teacher distribution; lies in (0, ln K]."""
    z = (np.asarray(logits) - center) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    logprob = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(logprob)
    return float(-(p * logprob).sum(axis=-1).mean())
