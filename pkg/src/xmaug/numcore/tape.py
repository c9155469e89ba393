"""Reverse-mode tape: tensors, computation recording, backward pass.

Every tensor is a node on exactly one tape. Ops (see mod:`xmaug.numcore.ops`)
push nodes in execution order, which is automatically a topological order
since an op's inputs must exist before the op runs. ``Tape.backward`` walks
the record in reverse, accumulating vector-Jacobian products, and finally
sums parameter-node gradients into their owning :class:`ParameterStore`
(summing, not overwriting, so multi-sample estimators can accumulate).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

__all__ = ["Tensor", "Tape", "ShapeError"]


class ShapeError(ValueError):
    """Raised when an op's input shapes do not conform to its signature."""


class Tensor:
    """One node on a tape: a float64 array plus backward bookkeeping.

    ``data`` is always a C-contiguous float64 ndarray; scalars use shape ().
    ``grad`` is lazily allocated during backward and holds the accumulated
    gradient of the backward root with respect to this node.
    """

    __slots__ = ("data", "tape", "idx", "parents", "vjp", "grad")

    def __init__(
        self,
        data: np.ndarray,
        tape: "Tape",
        idx: int,
        parents: tuple[int, ...] = (),
        vjp: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
    ):
        self.data = data
        self.tape = tape
        self.idx = idx
        self.parents = parents
        self.vjp = vjp
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has shape {self.data.shape}, not scalar")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.data.shape}, idx={self.idx})"


def _as_f64(value) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=np.float64)
    return arr


class Tape:
    """Ordered record of primitive applications with gradient accumulators."""

    __slots__ = ("nodes", "_param_nodes", "_backward_done")

    def __init__(self):
        self.nodes: list[Tensor] = []
        # (node index, store, entry name) for every parameter leaf
        self._param_nodes: list[tuple[int, object, str]] = []
        self._backward_done = False

    def __len__(self) -> int:
        return len(self.nodes)

    def push(
        self,
        data: np.ndarray,
        parents: tuple[int, ...] = (),
        vjp: Optional[Callable] = None,
    ) -> Tensor:
        t = Tensor(data, self, len(self.nodes), parents, vjp)
        self.nodes.append(t)
        return t

    def const(self, value) -> Tensor:
        """Record a non-differentiable input (data, sampled ids, masks...)."""
        return self.push(_as_f64(value))

    def param(self, store, name: str) -> Tensor:
        """Record a leaf bound to a named :class:`ParameterStore` entry.

        After ``backward``, this node's gradient is summed into the store's
        gradient buffer for ``name``.
        """
        t = self.push(store.value(name))
        self._param_nodes.append((t.idx, store, name))
        return t

    def backward(self, root: Tensor, seed: float = 1.0) -> None:
        """Accumulate d(seed * root)/d(param) into every reachable parameter.

        ``root`` must be a scalar node on this tape. The forward record is
        left untouched, but ``backward`` may run only once per tape.
        """
        if root.tape is not self:
            raise ValueError("backward: root tensor belongs to a different tape")
        if root.data.size != 1:
            raise ShapeError(f"backward: root must be scalar, got shape {root.data.shape}")
        if self._backward_done:
            raise RuntimeError("backward: tape already consumed; build a fresh tape")
        self._backward_done = True

        root.grad = np.full(root.data.shape, float(seed))
        nodes = self.nodes
        for i in range(root.idx, -1, -1):
            node = nodes[i]
            g = node.grad
            if g is None or node.vjp is None:
                continue
            contribs = node.vjp(g)
            for p_idx, pg in zip(node.parents, contribs):
                if pg is None:
                    continue
                parent = nodes[p_idx]
                if parent.grad is None:
                    # copy: vjps may return views or share arrays between parents
                    parent.grad = np.array(pg, dtype=np.float64)
                else:
                    parent.grad += pg

        for idx, store, name in self._param_nodes:
            g = nodes[idx].grad
            if g is not None:
                store.accumulate_grad(name, g)

    def check_finite(self) -> None:
        """Raise if any forward value on the tape is NaN/Inf (divergence guard)."""
        for node in self.nodes:
            if not np.all(np.isfinite(node.data)):
                raise FloatingPointError(
                    f"non-finite value at tape node {node.idx} (shape {node.data.shape})"
                )
