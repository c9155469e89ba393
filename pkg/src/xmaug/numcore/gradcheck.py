"""Central finite-difference gradient checking.

``grad_check`` compares the tape's analytic gradients of a scalar loss with
central differences, coordinate by coordinate, using the scale-protected
relative error |a - f| / max(1, |a|, |f|). The builder must be
deterministic in the parameters (freeze any sampling before checking).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ParameterStore
from .tape import Tensor

__all__ = ["grad_check", "finite_diff", "GradCheckReport", "NonFiniteLossError"]


class NonFiniteLossError(FloatingPointError):
    """The loss evaluated to NaN/Inf during a finite-difference probe."""


@dataclass
class GradCheckReport:
    eps: float
    tol: float
    # name -> (max relative error, flat index where it occurred)
    per_param: dict[str, tuple[float, int]] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max((e for e, _ in self.per_param.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol

    def worst(self) -> str:
        if not self.per_param:
            return "no parameters"
        name, (err, idx) = max(self.per_param.items(), key=lambda kv: kv[1][0])
        return f"{name}[{idx}] rel_err={err:.3e}"


def _loss_value(builder: Callable[[ParameterStore], Tensor], store: ParameterStore) -> float:
    val = builder(store).item()
    if not np.isfinite(val):
        raise NonFiniteLossError("loss evaluated non-finite")
    return val


def finite_diff(
    builder: Callable[[ParameterStore], Tensor],
    store: ParameterStore,
    eps: float = 1e-5,
    names: list[str] | None = None,
) -> dict[str, np.ndarray]:
    """Central finite differences of the builder's loss for each entry."""
    names = names if names is not None else store.names()
    out: dict[str, np.ndarray] = {}
    for name in names:
        value = store.value(name)
        fd = np.zeros_like(value)
        flat = value.ravel()
        fd_flat = fd.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            try:
                up = _loss_value(builder, store)
                flat[i] = orig - eps
                down = _loss_value(builder, store)
            except NonFiniteLossError as exc:
                flat[i] = orig
                raise NonFiniteLossError(
                    f"loss non-finite while perturbing {name}[{i}] by +/-{eps}"
                ) from exc
            flat[i] = orig
            fd_flat[i] = (up - down) / (2.0 * eps)
        out[name] = fd
    return out


def grad_check(
    builder: Callable[[ParameterStore], Tensor],
    store: ParameterStore,
    eps: float = 1e-5,
    tol: float = 1e-4,
    names: list[str] | None = None,
) -> GradCheckReport:
    """Check analytic gradients of ``builder``'s loss against central differences.

    The builder is called with the store and must return the scalar loss
    tensor on a fresh tape; ``grad_check`` runs the backward pass itself.
    A store with no (checked) parameters yields an empty, passing report.
    """
    names = names if names is not None else store.names()
    report = GradCheckReport(eps=eps, tol=tol)

    store.zero_grads()
    root = builder(store)
    if not np.isfinite(root.item()):
        raise NonFiniteLossError("loss evaluated non-finite at the unperturbed point")
    root.tape.backward(root)
    analytic = {name: store.grad(name).copy() for name in names}
    store.zero_grads()

    fd = finite_diff(builder, store, eps=eps, names=names)
    for name in names:
        a = analytic[name].ravel()
        f = fd[name].ravel()
        if a.size == 0:
            report.per_param[name] = (0.0, 0)
            continue
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(f)))
        rel = np.abs(a - f) / denom
        idx = int(np.argmax(rel))
        report.per_param[name] = (float(rel[idx]), idx)
    return report
