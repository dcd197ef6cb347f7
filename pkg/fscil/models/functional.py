"""Differentiable operations on Tensor.

Every operation validates shapes, computes its result with numpy and records a
backward closure on the active tape. Broadcasting is limited to adding a 1-D
bias along the last axis; every other shape disagreement is a DimensionError.
"""

from typing import List, Optional, Sequence, Union

import numpy as np

from fscil.exceptions import DimensionError, LabelRangeError, NumericError
from fscil.models.tensor import Tensor, make_node


def as_tensor(value: Union[Tensor, np.ndarray, float, Sequence]) -> Tensor:
    """Return value unchanged if it is a Tensor, otherwise wrap a copy."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _is_row_bias(a: Tensor, b: Tensor) -> bool:
    return b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1]


def _sum_to_bias(grad: np.ndarray) -> np.ndarray:
    return grad.reshape(-1, grad.shape[-1]).sum(axis=0)


# Elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1-D bias added to every row of ``a``."""
    if a.shape == b.shape:
        return make_node(a.data + b.data, (a, b), lambda g: (g, g))
    if _is_row_bias(a, b):
        return make_node(a.data + b.data, (a, b), lambda g: (g, _sum_to_bias(g)))
    raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not match")


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference; ``b`` may be a row bias."""
    if a.shape == b.shape:
        return make_node(a.data - b.data, (a, b), lambda g: (g, -g))
    if _is_row_bias(a, b):
        return make_node(a.data - b.data, (a, b), lambda g: (g, -_sum_to_bias(g)))
    raise DimensionError(f"sub: shapes {a.shape} and {b.shape} do not match")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not match")
    a_data, b_data = a.data, b.data
    return make_node(a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data))


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""
    return make_node(a.data * factor, (a,), lambda g: (g * factor,))


def relu(x: Tensor) -> Tensor:
    """Rectified linear unit."""
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# Products and shape manipulation


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m×k and a k×n tensor."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    a_data, b_data = a.data, b.data
    return make_node(
        a_data @ b_data,
        (a, b),
        lambda g: (g @ b_data.T, a_data.T @ g),
    )


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product of b×m×k and b×k×n tensors."""
    if (
        a.ndim != 3
        or b.ndim != 3
        or a.shape[0] != b.shape[0]
        or a.shape[2] != b.shape[1]
    ):
        raise DimensionError(f"bmm: cannot multiply {a.shape} by {b.shape}")
    a_data, b_data = a.data, b.data
    return make_node(
        np.matmul(a_data, b_data),
        (a, b),
        lambda g: (
            np.matmul(g, b_data.transpose(0, 2, 1)),
            np.matmul(a_data.transpose(0, 2, 1), g),
        ),
    )


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise DimensionError(f"transpose: need at least 2 dimensions, got {x.shape}")
    return make_node(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Reshape without changing the number of values."""
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    original = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along an existing axis."""
    if not tensors:
        raise DimensionError("concat: no tensors given")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors:
        other = [s for i, s in enumerate(t.shape) if i != axis]
        first = [s for i, s in enumerate(tensors[0].shape) if i != axis]
        if t.ndim != ndim or other != first:
            raise DimensionError(
                f"concat: shape {t.shape} does not fit {tensors[0].shape} on axis {axis}"
            )
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g: np.ndarray) -> List[np.ndarray]:
        return np.split(g, splits, axis=axis)

    return make_node(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        backward_fn,
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join equally shaped tensors along a new axis."""
    if not tensors:
        raise DimensionError("stack: no tensors given")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"stack: shape {t.shape} differs from {shape}")
    axis = axis % (len(shape) + 1)

    def backward_fn(g: np.ndarray) -> List[np.ndarray]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return make_node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn)


def take(x: Tensor, indices: Sequence[int], axis: int = 0) -> Tensor:
    """Gather slices along an axis; repeated indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[axis]):
        raise DimensionError(f"take: index out of range for axis {axis} of {x.shape}")
    shape = x.shape

    def backward_fn(g: np.ndarray) -> tuple:
        full = np.zeros(shape)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (full,)

    return make_node(np.take(x.data, idx, axis=axis), (x,), backward_fn)


def repeat_batch(x: Tensor, count: int) -> Tensor:
    """Copy a tensor ``count`` times along a new leading axis."""
    data = np.broadcast_to(x.data, (count,) + x.shape).copy()
    return make_node(data, (x,), lambda g: (g.sum(axis=0),))


# Reductions


def sum_all(x: Tensor) -> Tensor:
    """Sum of every value as a scalar tensor."""
    shape = x.shape
    return make_node(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    """Mean over one axis, or over all values when ``axis`` is None."""
    shape = x.shape
    if axis is None:
        n = x.data.size
        return make_node(
            np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),)
        )
    axis = axis % x.ndim
    n = shape[axis]

    def backward_fn(g: np.ndarray) -> tuple:
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return make_node(x.data.mean(axis=axis), (x,), backward_fn)


# Normalized outputs and losses


def _check_finite(x: Tensor, op: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"{op}: input contains NaN or Inf")


def _softmax(data: np.ndarray, axis: int) -> np.ndarray:
    shifted = data - data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    """Normalized exponentials along an axis, computed with max subtraction."""
    if logits.ndim == 0 or logits.shape[axis] < 1:
        raise DimensionError(f"softmax: empty axis in shape {logits.shape}")
    _check_finite(logits, "softmax")
    probs = _softmax(logits.data, axis)

    def backward_fn(g: np.ndarray) -> tuple:
        return (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),)

    return make_node(probs, (logits,), backward_fn)


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    """Logarithm of softmax, computed without forming the probabilities first."""
    _check_finite(logits, "log_softmax")
    shifted = logits.data - logits.data.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def backward_fn(g: np.ndarray) -> tuple:
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return make_node(out, (logits,), backward_fn)


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Batch mean of −log softmax(logits)[label]."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    batch, classes = logits.shape
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size != batch:
        raise DimensionError(f"cross_entropy: {y.size} labels for {batch} rows")
    if batch and (y.min() < 0 or y.max() >= classes):
        bad = int(y[(y < 0) | (y >= classes)][0])
        raise LabelRangeError(f"cross_entropy: label {bad} outside [0, {classes})")
    _check_finite(logits, "cross_entropy")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(batch)
    loss = -log_probs[rows, y].mean()

    def backward_fn(g: np.ndarray) -> tuple:
        grad = np.exp(log_probs)
        grad[rows, y] -= 1.0
        return (grad * (float(g) / batch),)

    return make_node(np.asarray(loss), (logits,), backward_fn)


def layer_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize each row over the last axis, then scale by gamma and shift by beta."""
    d = x.shape[-1] if x.ndim else 0
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm: input {x.shape} needs gamma/beta of shape ({d},), "
            f"got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std
    gamma_data = gamma.data

    def backward_fn(g: np.ndarray) -> tuple:
        d_hat = g * gamma_data
        dx = inv_std / d * (
            d * d_hat
            - d_hat.sum(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=-1, keepdims=True)
        )
        return (dx, _sum_to_bias(g * x_hat), _sum_to_bias(g))

    return make_node(x_hat * gamma_data + beta.data, (x, gamma, beta), backward_fn)


def dropout(
    x: Tensor,
    p: float,
    rng: Optional[np.random.Generator],
    train: bool,
) -> Tensor:
    """Zero each value with probability p and rescale survivors by 1/(1−p).

    Identity in eval mode or when p is zero.
    """
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))
