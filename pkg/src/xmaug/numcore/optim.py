"""Adam optimizer over a ParameterStore."""

from __future__ import annotations

import numpy as np

from .params import ParameterStore

__all__ = ["adam_step", "NonFiniteGradError"]


class NonFiniteGradError(FloatingPointError):
    """A gradient buffer contains NaN/Inf; the step was refused."""


def adam_step(
    store: ParameterStore,
    lr: float = 0.001,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """Apply one Adam update to every entry, then zero the gradients.

    Refuses (without touching any parameter) if any gradient is non-finite.
    """
    b1, b2 = betas
    for name in store.names():
        if not np.all(np.isfinite(store.grad(name))):
            raise NonFiniteGradError(f"non-finite gradient for parameter '{name}'")
    for name in store.names():
        e = store.entry(name)
        g = e.grad
        e.step += 1
        e.m = b1 * e.m + (1.0 - b1) * g
        e.v = b2 * e.v + (1.0 - b2) * (g * g)
        m_hat = e.m / (1.0 - b1 ** e.step)
        v_hat = e.v / (1.0 - b2 ** e.step)
        e.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        e.grad[...] = 0.0
