"""Differentiable primitives.

The set is exactly what the models need: affine maps, matrix products,
concatenation, elementwise arithmetic, the usual squashing nonlinearities,
softmax / log-softmax with index gather, embedding lookup, mean pooling
over rows, feature-wise normalization with learned scale/shift, and two
numerically stabilized log-loss kernels computed from logits.

All ops validate input shapes and raise :class:`ShapeError` naming the
primitive and the offending shapes. Everything is float64.
"""

from __future__ import annotations

import numpy as np

from .tape import ShapeError, Tape, Tensor

__all__ = [
    "add", "sub", "mul", "scale", "cmul", "dot", "matmul", "affine",
    "concat", "tanh", "relu", "sigmoid", "log_sigmoid", "softmax",
    "log_softmax", "embed", "gather", "mean_rows", "sum_all", "mean_all",
    "featnorm", "bce_with_logits", "forward_primitive", "PRIMITIVES",
]


def _same_tape(name: str, *tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError(f"{name}: inputs live on different tapes")
    return tape


def _require_same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{name}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    tape = _same_tape("add", a, b)
    return tape.push(a.data + b.data, (a.idx, b.idx), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    tape = _same_tape("sub", a, b)
    return tape.push(a.data - b.data, (a.idx, b.idx), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    _require_same_shape("mul", a, b)
    tape = _same_tape("mul", a, b)
    ad, bd = a.data, b.data
    return tape.push(ad * bd, (a.idx, b.idx), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    c = float(c)
    return a.tape.push(a.data * c, (a.idx,), lambda g: (g * c,))


def cmul(a: Tensor, const: np.ndarray) -> Tensor:
    """Elementwise product with a constant array (no gradient to the constant)."""
    const = np.asarray(const, dtype=np.float64)
    if const.shape != a.data.shape:
        raise ShapeError(f"cmul: shapes {a.data.shape} and {const.shape} differ")
    return a.tape.push(a.data * const, (a.idx,), lambda g: (g * const,))


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors, scalar output."""
    if a.data.ndim != 1 or b.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ShapeError(f"dot: shapes {a.data.shape} and {b.data.shape} do not conform")
    tape = _same_tape("dot", a, b)
    ad, bd = a.data, b.data
    out = np.asarray(ad @ bd)
    return tape.push(out, (a.idx, b.idx), lambda g: (g * bd, g * ad))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: (m,n)@(n,k) -> (m,k) or (m,n)@(n,) -> (m,)."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim not in (1, 2) or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
    tape = _same_tape("matmul", a, b)
    if bd.ndim == 1:
        vjp = lambda g: (np.outer(g, bd), ad.T @ g)
    else:
        vjp = lambda g: (g @ bd.T, ad.T @ g)
    return tape.push(ad @ bd, (a.idx, b.idx), vjp)


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """Fused w @ x + b for a weight matrix, input vector, and bias vector."""
    wd, xd, bd = w.data, x.data, b.data
    if wd.ndim != 2 or xd.ndim != 1 or wd.shape[1] != xd.shape[0] or bd.shape != (wd.shape[0],):
        raise ShapeError(f"affine: shapes {wd.shape}, {xd.shape}, {bd.shape} do not conform")
    tape = _same_tape("affine", w, x, b)
    return tape.push(
        wd @ xd + bd,
        (w.idx, x.idx, b.idx),
        lambda g: (np.outer(g, xd), wd.T @ g, g),
    )


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate vectors into one vector."""
    if not parts:
        raise ShapeError("concat: empty input list")
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat: expected vectors, got shape {p.data.shape}")
    tape = _same_tape("concat", *parts)
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return tape.push(np.concatenate([p.data for p in parts]), tuple(p.idx for p in parts), vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return a.tape.push(out, (a.idx,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return a.tape.push(np.where(mask, a.data, 0.0), (a.idx,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    # stable in both tails: exp of a non-positive argument only
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return a.tape.push(out, (a.idx,), lambda g: (g * out * (1.0 - out),))


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(x)) computed as -softplus(-x); never evaluates log(0)."""
    x = a.data
    out = -np.logaddexp(0.0, -x)
    sig_neg = np.where(x >= 0, np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))), 1.0 / (1.0 + np.exp(-np.abs(x))))
    return a.tape.push(out, (a.idx,), lambda g: (g * sig_neg,))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError(f"softmax: expected vector, got shape {a.data.shape}")
    s = _softmax(a.data)
    return a.tape.push(s, (a.idx,), lambda g: (s * (g - float(g @ s)),))


def log_softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError(f"log_softmax: expected vector, got shape {a.data.shape}")
    x = a.data
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    out = x - lse
    s = np.exp(out)
    return a.tape.push(out, (a.idx,), lambda g: (g - s * g.sum(),))


def embed(table: Tensor, index: int) -> Tensor:
    """Row lookup in a 2D table; differentiable w.r.t. the table."""
    if table.data.ndim != 2:
        raise ShapeError(f"embed: expected matrix, got shape {table.data.shape}")
    index = int(index)
    if not 0 <= index < table.data.shape[0]:
        raise IndexError(f"embed: row {index} out of range for shape {table.data.shape}")
    shape = table.data.shape

    def vjp(g):
        dt = np.zeros(shape)
        dt[index] = g
        return (dt,)

    return table.tape.push(table.data[index].copy(), (table.idx,), vjp)


def gather(a: Tensor, index: int) -> Tensor:
    """Pick one element of a vector as a scalar (log-prob gather)."""
    if a.data.ndim != 1:
        raise ShapeError(f"gather: expected vector, got shape {a.data.shape}")
    index = int(index)
    if not 0 <= index < a.data.shape[0]:
        raise IndexError(f"gather: index {index} out of range for shape {a.data.shape}")
    n = a.data.shape[0]

    def vjp(g):
        dx = np.zeros(n)
        dx[index] = g
        return (dx,)

    return a.tape.push(np.asarray(a.data[index]), (a.idx,), vjp)


def mean_rows(a: Tensor) -> Tensor:
    """Mean over the rows of a matrix (pooling region features)."""
    if a.data.ndim != 2:
        raise ShapeError(f"mean_rows: expected matrix, got shape {a.data.shape}")
    k = a.data.shape[0]
    return a.tape.push(a.data.mean(axis=0), (a.idx,), lambda g: (np.tile(g / k, (k, 1)),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return a.tape.push(np.asarray(a.data.sum()), (a.idx,), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    n = a.data.size
    return a.tape.push(np.asarray(a.data.mean()), (a.idx,), lambda g: (np.full(shape, float(g) / n),))


def featnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    eps: float = 1e-5,
) -> Tensor:
    """Feature-wise normalization with learned scale/shift.

    ``running_mean`` / ``running_var`` are frozen statistics (plain arrays,
    no gradient); only ``gamma`` and ``beta`` are learned.
    """
    xd = x.data
    if not (xd.shape == gamma.data.shape == beta.data.shape == running_mean.shape == running_var.shape):
        raise ShapeError(
            f"featnorm: shapes {xd.shape}, {gamma.data.shape}, {beta.data.shape}, "
            f"{running_mean.shape}, {running_var.shape} differ"
        )
    tape = _same_tape("featnorm", x, gamma, beta)
    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (xd - running_mean) * inv
    gd = gamma.data
    return tape.push(
        gd * xhat + beta.data,
        (x.idx, gamma.idx, beta.idx),
        lambda g: (g * gd * inv, g * xhat, g),
    )


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over answers, computed from logits.

    mean_i [ softplus(z_i) - t_i * z_i ], the stabilized form of
    -[t log sigma(z) + (1-t) log(1-sigma(z))]. Targets are constants in
    [0,1]; values outside that range are rejected.
    """
    targets = np.asarray(targets, dtype=np.float64)
    z = logits.data
    if z.ndim != 1 or targets.shape != z.shape:
        raise ShapeError(f"bce_with_logits: shapes {z.shape} and {targets.shape} differ")
    if np.any((targets < 0.0) | (targets > 1.0)):
        raise ValueError("bce_with_logits: targets must lie in [0, 1]")
    n = z.shape[0]
    loss = np.asarray((np.logaddexp(0.0, z) - targets * z).mean())
    sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return logits.tape.push(loss, (logits.idx,), lambda g: (float(g) * (sig - targets) / n,))


# primitive-id -> callable, for generic dispatch and the gradient sweep
PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "cmul": cmul,
    "dot": dot,
    "matmul": matmul,
    "affine": affine,
    "concat": concat,
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
    "log_sigmoid": log_sigmoid,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "embed": embed,
    "gather": gather,
    "mean_rows": mean_rows,
    "sum_all": sum_all,
    "mean_all": mean_all,
    "featnorm": featnorm,
    "bce_with_logits": bce_with_logits,
}


def forward_primitive(kind: str, inputs: list, **kwargs) -> Tensor:
    """Apply a primitive by id. Unknown ids are rejected."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise KeyError(f"unknown primitive '{kind}'") from None
    return fn(*inputs, **kwargs)
