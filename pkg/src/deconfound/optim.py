"""Adam optimizer with bias correction, plus a patience-based early stopper."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError, ValidationError


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError(f"lr must be > 0, got {self.lr}")


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new parameters, mutates ``state``.

    m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """
    if set(params) != set(grads):
        raise ValidationError(f"parameter/gradient keys differ: {sorted(params)} vs {sorted(grads)}")
    state.step += 1
    t = state.step
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient for '{name}' has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


class EarlyStopping:
    """Track the best validation loss; ``should_stop`` after ``patience`` bad epochs."""

    def __init__(self, patience: int = 10):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = -1
        self._bad = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Returns True when this epoch is the new best."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self._bad = 0
            return True
        self._bad += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self._bad > self.patience
