"""Adam with bias correction over named parameters."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter


class GradientError(RuntimeError):
    """adam_step was asked to update a parameter whose gradient is unset."""


@dataclass
class AdamState:
    """Optimizer state. First/second moments are keyed by parameter name and
    always match the parameter's shape; ``step`` increases by exactly 1 per
    update."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: list[Parameter], state: AdamState, lr: float | None = None) -> None:
    """One bias-corrected Adam update over ``params``; gradients are cleared
    afterward so a stale gradient can never be applied twice.

    lr overrides state.lr for this step only (warmup schedules).
    """
    for p in params:
        if p.grad is None:
            raise GradientError(f"parameter {p.name!r} has no gradient; run backward() first")
        if p.grad.shape != p.data.shape:
            raise GradientError(f"parameter {p.name!r} gradient shape {p.grad.shape} != value shape {p.data.shape}")

    state.step += 1
    t = state.step
    rate = state.lr if lr is None else lr
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.data -= (rate * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)
        p.grad = None
