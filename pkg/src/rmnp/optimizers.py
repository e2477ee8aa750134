"""Stateful optimizer steps: RMNP, Muon, momentum SGD, and AdamW.

The three matrix optimizers share one recurrence (exponential-moving-average
momentum, then a preconditioner, then a decoupled-weight-decay update) and
differ only in the preconditioner: row normalization, Newton-Schulz, or
identity. AdamW handles everything that is not a genuine matrix. Learning
rates come from a constant or cosine-with-warmup schedule, optionally scaled
by max(1, sqrt(n/m)) to equalize update RMS across matrix shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .matrix import DimensionError, Matrix, row_norms
from .preconditioners import (
    DEFAULT_NS_COEFFS,
    DEFAULT_RN_EPS,
    NsCoefficients,
    newton_schulz5,
    row_normalize,
)

__all__ = [
    "OptimizerConfig",
    "OptimizerKind",
    "OptimizerState",
    "ParamGroup",
    "Schedule",
    "ScheduleKind",
    "adamw_step",
    "descent_step_bound",
    "momentum_error",
    "momentum_sgd_step",
    "momentum_update",
    "muon_step",
    "partition_params",
    "rms_factor",
    "rmnp_step",
    "schedule_lr",
    "warmup_steps",
]


class OptimizerKind(str, Enum):
    RMNP = "rmnp"
    MUON = "muon"
    ADAMW = "adamw"
    MOMENTUM_SGD = "sgd"


@dataclass
class OptimizerConfig:
    """Hyperparameters for one optimizer instance.

    ``lr_matrix`` drives the matrix optimizer, ``lr_adamw`` the AdamW side of
    a mixed run. ``beta`` is the EMA momentum of the matrix optimizers;
    AdamW's moment coefficients live in ``adamw_betas``.
    """

    kind: OptimizerKind = OptimizerKind.RMNP
    lr_matrix: float = 0.02
    lr_adamw: float = 3e-3
    beta: float = 0.95
    adamw_betas: tuple[float, float] = (0.9, 0.95)
    weight_decay: float = 0.1
    rms_scaling: bool = True
    eps: float = 1e-8
    ns_coeffs: NsCoefficients = DEFAULT_NS_COEFFS
    rn_eps: float = DEFAULT_RN_EPS

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        for name, b in zip(("adamw_betas[0]", "adamw_betas[1]"), self.adamw_betas):
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if self.lr_matrix <= 0 or self.lr_adamw <= 0:
            raise ValueError("learning rates must be positive")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.eps <= 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.rn_eps < 0:
            raise ValueError(f"rn_eps must be >= 0, got {self.rn_eps}")


@dataclass
class OptimizerState:
    """Per-parameter buffers: step counter, EMA momentum, AdamW moments."""

    t: int = 0
    v: np.ndarray | None = None
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    COSINE_WARMUP = "cosine-warmup"


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule over steps 0..total_steps."""

    kind: ScheduleKind = ScheduleKind.COSINE_WARMUP
    total_steps: int = 1
    base_lr: float = 1.0
    warmup_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError(f"warmup_fraction must lie in [0, 1), got {self.warmup_fraction}")
        if self.base_lr < 0:
            raise ValueError(f"base_lr must be >= 0, got {self.base_lr}")


def warmup_steps(s: Schedule) -> int:
    """Number of linear-ramp steps: ceil(warmup_fraction * total_steps)."""
    return math.ceil(s.warmup_fraction * s.total_steps)


def schedule_lr(s: Schedule, t: int) -> float:
    """Learning rate at step *t*: linear ramp to base_lr, then cosine decay to 0."""
    if not 0 <= t <= s.total_steps:
        raise ValueError(f"step {t} outside schedule range [0, {s.total_steps}]")
    if s.kind is ScheduleKind.CONSTANT:
        return s.base_lr
    w = warmup_steps(s)
    if t < w:
        return s.base_lr * t / w
    if s.total_steps == w:
        return s.base_lr
    progress = (t - w) / (s.total_steps - w)
    return s.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass(frozen=True)
class ParamGroup:
    """Routing record for one parameter: matrix optimizer or AdamW."""

    param_id: str
    shape: tuple[int, ...]
    use_matrix: bool


def partition_params(shapes: Sequence[tuple[int, ...]]) -> list[ParamGroup]:
    """Route each shape: 2-D with both dims > 1 goes to the matrix optimizer."""
    groups = []
    for i, shape in enumerate(shapes):
        use_matrix = len(shape) == 2 and shape[0] > 1 and shape[1] > 1
        groups.append(ParamGroup(param_id=f"p{i}", shape=tuple(shape), use_matrix=use_matrix))
    return groups


def momentum_update(state: OptimizerState, grad: np.ndarray, beta: float) -> np.ndarray:
    """EMA momentum: v <- beta * v + (1 - beta) * grad, stored and returned."""
    if state.v is None:
        state.v = np.zeros_like(grad)
    if state.v.shape != grad.shape:
        raise DimensionError(f"momentum shape {state.v.shape} vs gradient {grad.shape}")
    state.v = beta * state.v + (1.0 - beta) * grad
    return state.v


def momentum_error(state: OptimizerState, grad_true: np.ndarray) -> np.ndarray:
    """Gap between the momentum buffer and the true gradient: v - grad_true."""
    v = state.v if state.v is not None else np.zeros_like(grad_true)
    return v - grad_true


def rms_factor(shape: tuple[int, int]) -> float:
    """Learning-rate multiplier max(1, sqrt(n/m)) for an m x n matrix."""
    m, n = shape
    return max(1.0, math.sqrt(n / m))


def _matrix_step(
    w: Matrix,
    grad: Matrix,
    state: OptimizerState,
    config: OptimizerConfig,
    lr_t: float,
    precondition: Callable[[Matrix], Matrix],
) -> Matrix:
    if w.shape != grad.shape:
        raise DimensionError(f"parameter shape {w.shape} vs gradient {grad.shape}")
    if lr_t < 0:
        raise ValueError(f"lr_t must be >= 0, got {lr_t}")
    state.t += 1
    v = momentum_update(state, grad, config.beta)
    d = precondition(v)
    lr_eff = lr_t * rms_factor(w.shape) if config.rms_scaling else lr_t
    return (1.0 - lr_t * config.weight_decay) * w - lr_eff * d


def rmnp_step(
    w: Matrix, grad: Matrix, state: OptimizerState, config: OptimizerConfig, lr_t: float
) -> Matrix:
    """One RMNP update: decoupled decay, then subtract lr_eff * RN(momentum)."""
    return _matrix_step(
        w, grad, state, config, lr_t, lambda v: row_normalize(v, config.rn_eps)
    )


def muon_step(
    w: Matrix, grad: Matrix, state: OptimizerState, config: OptimizerConfig, lr_t: float
) -> Matrix:
    """One Muon update: decoupled decay, then subtract lr_eff * NS5(momentum)."""
    return _matrix_step(
        w, grad, state, config, lr_t, lambda v: newton_schulz5(v, config.ns_coeffs)
    )


def momentum_sgd_step(
    w: Matrix, grad: Matrix, state: OptimizerState, config: OptimizerConfig, lr_t: float
) -> Matrix:
    """Ablation path: the same recurrence with the identity preconditioner."""
    return _matrix_step(w, grad, state, config, lr_t, lambda v: v)


def adamw_step(
    w: np.ndarray, grad: np.ndarray, state: OptimizerState, config: OptimizerConfig, lr_t: float
) -> np.ndarray:
    """Decoupled-weight-decay AdamW with bias-corrected moments."""
    if w.shape != grad.shape:
        raise DimensionError(f"parameter shape {w.shape} vs gradient {grad.shape}")
    if lr_t < 0:
        raise ValueError(f"lr_t must be >= 0, got {lr_t}")
    if state.adam_m is None:
        state.adam_m = np.zeros_like(grad)
        state.adam_v = np.zeros_like(grad)
    state.t += 1
    b1, b2 = config.adamw_betas
    state.adam_m = b1 * state.adam_m + (1.0 - b1) * grad
    state.adam_v = b2 * state.adam_v + (1.0 - b2) * grad * grad
    m_hat = state.adam_m / (1.0 - b1 ** state.t)
    v_hat = state.adam_v / (1.0 - b2 ** state.t)
    return (1.0 - lr_t * config.weight_decay) * w - lr_t * m_hat / (np.sqrt(v_hat) + config.eps)


def descent_step_bound(grad: Matrix, lipschitz_f: float) -> float:
    """Step-size bound 2 * min_row_norm(grad) / (L * m) under which one
    row-normalized step on an L-smooth objective strictly decreases it."""
    if lipschitz_f <= 0:
        raise ValueError(f"lipschitz_f must be > 0, got {lipschitz_f}")
    m = grad.shape[0]
    return 2.0 * float(row_norms(grad).min()) / (lipschitz_f * m)
