"""Online type-II maximum likelihood for the noise-prior hyperparameters (a, b).

Each model ascends its own one-step predictive log density
log p(y_t | y_{1:t-1}, model) in the unconstrained coordinates
(log a, log b) with step size alpha_t = alpha0 / sqrt(t).  The gradient of the
run-length mixture is propagated recursively: every hypothesis carries the
partial derivatives of its log joint mass, updated with the same growth /
changepoint structure as the mass itself.

Cross-model coupling through the shared changepoint parent pool is ignored
(other models' masses depend on this model's hyperparameters only at second
order); the recursion is exact for single-model universes.  Updated values
apply to newly born hypotheses only -- live hypotheses keep the
hyperparameters they were born with, which preserves the prequential identity
of their predictive chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

__all__ = ["HyperConfig", "HyperState", "sgd_step", "mixture_gradient"]


@dataclass(frozen=True)
class HyperConfig:
    enabled: bool = False
    alpha0: float = 0.1

    def __post_init__(self):
        if self.alpha0 < 0:
            raise ValueError(f"alpha0 must be non-negative, got {self.alpha0}")


@dataclass
class HyperState:
    """Unconstrained (log a, log b) plus the step-size schedule state."""

    log_a: float
    log_b: float
    alpha0: float = 0.1
    t: int = 0
    skipped: int = 0

    @classmethod
    def from_values(cls, a: float, b: float, alpha0: float = 0.1) -> "HyperState":
        return cls(log_a=math.log(a), log_b=math.log(b), alpha0=alpha0)

    @property
    def a(self) -> float:
        return math.exp(self.log_a)

    @property
    def b(self) -> float:
        return math.exp(self.log_b)


def sgd_step(state: HyperState, grad: np.ndarray) -> HyperState:
    """One ascent step with alpha_t = alpha0 / sqrt(t); skips non-finite gradients."""
    state.t += 1
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        state.skipped += 1
        return state
    step = state.alpha0 / math.sqrt(state.t)
    state.log_a += step * grad[0]
    state.log_b += step * grad[1]
    return state


def mixture_gradient(log_joint_new: np.ndarray, grads_new: np.ndarray,
                     log_joint_old: np.ndarray, grads_old: np.ndarray) -> np.ndarray:
    """Gradient of the model's one-step predictive log density.

    log p(y_t | y_{1:t-1}, m) = logsumexp(lj_t) - logsumexp(lj_{t-1}), so the
    gradient is the softmax-weighted mean of the per-hypothesis gradients at t
    minus the same at t-1.
    """
    return _weighted(log_joint_new, grads_new) - _weighted(log_joint_old, grads_old)


def _weighted(log_joint: np.ndarray, grads: np.ndarray) -> np.ndarray:
    if log_joint.size == 0:
        return np.zeros(2)
    w = np.exp(log_joint - np.max(log_joint))
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        return np.full(2, np.nan)
    return (w[:, None] * grads).sum(axis=0) / total
