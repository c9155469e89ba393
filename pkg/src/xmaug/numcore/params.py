"""Named parameter collections with paired gradient buffers and Adam state.

Checkpoint format (UTF-8, LF):

    XMA-CKPT 1
    <name>\t<ndim>\t<dim0>\t<dim1>...
    <v0> <v1> ... (17 significant digits per value)

One header line per entry followed by one value line; 17 significant
decimal digits round-trip float64 exactly, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ParameterStore", "CheckpointError"]

_MAGIC = "XMA-CKPT 1"


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


class _Entry:
    __slots__ = ("value", "grad", "m", "v", "step")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)
        self.step = 0


class ParameterStore:
    """Insertion-ordered map of name -> (value, grad, optimizer state)."""

    def __init__(self):
        self._entries: dict[str, _Entry] = {}

    # -- construction ------------------------------------------------------

    def add(self, name: str, value) -> np.ndarray:
        if name in self._entries:
            raise ValueError(f"parameter '{name}' already exists")
        arr = np.ascontiguousarray(value, dtype=np.float64)
        self._entries[name] = _Entry(arr)
        return arr

    def clone(self) -> "ParameterStore":
        """Deep copy of values only (fresh grads and optimizer state)."""
        out = ParameterStore()
        for name, e in self._entries.items():
            out.add(name, e.value.copy())
        return out

    # -- access ------------------------------------------------------------

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def section(self, prefix: str) -> list[str]:
        return [n for n in self._entries if n.startswith(prefix)]

    def value(self, name: str) -> np.ndarray:
        return self._entries[name].value

    def grad(self, name: str) -> np.ndarray:
        return self._entries[name].grad

    def entry(self, name: str) -> _Entry:
        return self._entries[name]

    def set_value(self, name: str, value) -> None:
        e = self._entries[name]
        arr = np.ascontiguousarray(value, dtype=np.float64)
        if arr.shape != e.value.shape:
            raise ValueError(f"set_value: shape {arr.shape} != {e.value.shape} for '{name}'")
        e.value = arr

    def n_values(self) -> int:
        return sum(e.value.size for e in self._entries.values())

    # -- gradients ---------------------------------------------------------

    def accumulate_grad(self, name: str, g: np.ndarray) -> None:
        self._entries[name].grad += g

    def zero_grads(self) -> None:
        for e in self._entries.values():
            e.grad[...] = 0.0

    def flat_grads(self, names: list[str] | None = None) -> np.ndarray:
        names = names if names is not None else self.names()
        return np.concatenate([self._entries[n].grad.ravel() for n in names]) if names else np.zeros(0)

    # -- serialization -----------------------------------------------------

    def save(self, path) -> None:
        lines = [_MAGIC]
        for name, e in self._entries.items():
            if not np.all(np.isfinite(e.value)):
                raise CheckpointError(f"refusing to save non-finite values for '{name}'")
            dims = "\t".join(str(d) for d in e.value.shape)
            header = f"{name}\t{e.value.ndim}" + (f"\t{dims}" if dims else "")
            lines.append(header)
            lines.append(" ".join(f"{x:.17g}" for x in e.value.ravel()))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ParameterStore":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != _MAGIC:
            raise CheckpointError(f"{path}: missing '{_MAGIC}' header")
        store = cls()
        i = 1
        while i < len(lines):
            if lines[i] == "":
                i += 1
                continue
            fields = lines[i].split("\t")
            if len(fields) < 2:
                raise CheckpointError(f"{path}:{i + 1}: malformed entry header")
            name = fields[0]
            try:
                ndim = int(fields[1])
                shape = tuple(int(d) for d in fields[2:2 + ndim])
            except ValueError as exc:
                raise CheckpointError(f"{path}:{i + 1}: bad dimensions") from exc
            if len(shape) != ndim:
                raise CheckpointError(f"{path}:{i + 1}: expected {ndim} dims, found {len(shape)}")
            if i + 1 >= len(lines):
                raise CheckpointError(f"{path}:{i + 2}: missing value line for '{name}'")
            try:
                flat = np.array([float(tok) for tok in lines[i + 1].split()], dtype=np.float64)
            except ValueError as exc:
                raise CheckpointError(f"{path}:{i + 2}: bad value for '{name}'") from exc
            expected = int(np.prod(shape)) if shape else 1
            if flat.size != expected:
                raise CheckpointError(
                    f"{path}:{i + 2}: '{name}' expects {expected} values, found {flat.size}"
                )
            store.add(name, flat.reshape(shape))
            i += 2
        return store
