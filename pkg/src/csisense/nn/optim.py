"""Adam optimizer and the two validation-metric schedules.

Both schedules treat the history as a metric to maximize (validation
accuracy); "improvement" means strictly greater than the best value so far.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict[str, dict[str, np.ndarray]],
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place.  ``t`` counts from 1."""
    if t < 1:
        raise DomainError("adam step count t must be at least 1")
    for name, p in params.items():
        g = grads[name]
        s = state.setdefault(name, {"m": np.zeros_like(p), "v": np.zeros_like(p)})
        s["m"] = beta1 * s["m"] + (1.0 - beta1) * g
        s["v"] = beta2 * s["v"] + (1.0 - beta2) * (g * g)
        m_hat = s["m"] / (1.0 - beta1**t)
        v_hat = s["v"] / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Stateful wrapper around :func:`adam_step` keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise DomainError("learning rate must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state: dict[str, dict[str, np.ndarray]] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        adam_step(params, grads, self.state, self.t, self.lr, self.beta1, self.beta2, self.eps)


def reduce_lr_on_plateau(
    history: list[float],
    lr: float,
    factor: float = 0.5,
    patience: int = 10,
    min_lr: float = 1e-6,
) -> float:
    """Learning rate after replaying ``history`` from the initial ``lr``.

    Each epoch without strict improvement increments a wait counter; when it
    reaches ``patience`` the rate is multiplied by ``factor`` (floored at
    ``min_lr``) and the counter resets.  Pure function of its arguments, so
    the caller passes the full metric history each epoch.
    """
    if not 0.0 < factor < 1.0:
        raise DomainError("factor must be in (0, 1)")
    if patience < 1:
        raise DomainError("patience must be at least 1")
    best = -np.inf
    wait = 0
    current = lr
    for value in history:
        if value > best:
            best = value
            wait = 0
        else:
            wait += 1
            if wait >= patience:
                current = max(min_lr, current * factor)
                wait = 0
    return current


def early_stopping(history: list[float], patience: int = 30) -> tuple[bool, int]:
    """(stop_now, best_epoch_index): stop once ``patience`` epochs have passed
    since the best metric value; best index is the earliest maximum."""
    if patience < 1:
        raise DomainError("patience must be at least 1")
    if not history:
        return False, -1
    best = int(np.argmax(history))
    return (len(history) - 1 - best) >= patience, best
