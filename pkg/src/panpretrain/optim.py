"""AdamW with decoupled weight decay and a linear-warmup cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteGradient
from .model import GROUPS, ModelParams, TuneMode, trainable_groups


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def zeros_like(cls, params: ModelParams, **hyper) -> "AdamWState":
        m = {g: np.zeros_like(params[g]) for g in GROUPS}
        v = {g: np.zeros_like(params[g]) for g in GROUPS}
        return cls(m=m, v=v, **hyper)

    def copy(self) -> "AdamWState":
        return AdamWState(
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
            self.step,
            self.beta1,
            self.beta2,
            self.eps,
            self.weight_decay,
        )


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float, groups=GROUPS) -> float:
    total = math.sqrt(sum(float(np.sum(grads[g].astype(np.float64) ** 2)) for g in groups))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for g in groups:
            grads[g] = grads[g] * grads[g].dtype.type(scale)
    return total


def adamw_step(
    state: AdamWState,
    params: ModelParams,
    grads: dict[str, np.ndarray],
    lr: float,
    mode: TuneMode | str = TuneMode.FULL,
) -> None:
    """One in-place AdamW update of the trainable groups.

    Frozen groups are not touched at all (their moments stay zero too).
    Raises NonFiniteGradient before mutating anything.
    """
    groups = trainable_groups(mode)
    for g in groups:
        if not np.all(np.isfinite(grads[g])):
            raise NonFiniteGradient(f"non-finite gradient in {g} at step {state.step + 1}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for g in groups:
        theta, grad = params.arrays[g], grads[g]
        m, v = state.m[g], state.v[g]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / bc1
        v_hat = v / bc2
        update = m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * theta
        theta -= lr * update


@dataclass(frozen=True)
class ScheduleConfig:
    peak_lr: float
    warmup_epochs: int
    total_epochs: int
    steps_per_epoch: int = 1
    min_lr: float = 0.0

    def __post_init__(self):
        if self.warmup_epochs >= self.total_epochs:
            raise ValueError("warmup must be shorter than the whole schedule")

    @property
    def warmup_steps(self) -> int:
        return self.warmup_epochs * self.steps_per_epoch

    @property
    def total_steps(self) -> int:
        return self.total_epochs * self.steps_per_epoch


def lr_at(step: int, cfg: ScheduleConfig) -> float:
    """Learning rate for optimizer step ``step`` (0-based).

    Linear warmup reaches the peak on step ``W - 1``; the cosine half-period
    spans ``[W, T]`` so ``lr_at(T)`` is exactly ``min_lr``.
    """
    w, t = cfg.warmup_steps, cfg.total_steps
    if step < w:
        return cfg.peak_lr * (step + 1) / w
    if step >= t:
        return cfg.min_lr
    progress = (step - w) / (t - w)
    return cfg.min_lr + (cfg.peak_lr - cfg.min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))

