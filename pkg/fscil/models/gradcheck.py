"""Finite-difference verification of recorded gradients."""

from typing import Callable, Sequence

import numpy as np

from fscil.models.tensor import Tensor, backward, no_grad, use_tape


def numerical_gradient(
    f: Callable[[], Tensor],
    param: Tensor,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of a scalar function with respect to one tensor."""
    if not param.data.flags.c_contiguous:
        param.data = np.ascontiguousarray(param.data)
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = f().item()
            flat[i] = original - eps
            minus = f().item()
            flat[i] = original
            flat_grad[i] = (plus - minus) / (2.0 * eps)
    return grad


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Largest relative disagreement between analytic and numerical gradients.

    ``f`` is re-evaluated with each parameter component nudged by ±eps, so it
    must be deterministic (dropout disabled). The per-component error is
    |analytic − numeric| / (|analytic| + |numeric| + 1e-12).
    """
    for p in params:
        p.zero_grad()
    with use_tape() as tape:
        loss = f()
        backward(loss)
        tape.clear()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p in params:
        p.zero_grad()

    worst = 0.0
    for p, exact in zip(params, analytic):
        numeric = numerical_gradient(f, p, eps)
        err = np.abs(exact - numeric) / (np.abs(exact) + np.abs(numeric) + 1e-12)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
