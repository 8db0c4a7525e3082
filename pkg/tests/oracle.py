"""Independent gradient oracle: central finite differences over a dense stack.

Used by the unit tests and the acceptance gate. Deliberately knows nothing
about the analytic backward pass; it only calls forward_stack and the loss
spec's value().
"""
from __future__ import annotations

import numpy as np

from ulab.nn import forward_stack


def loss_at(layers, x, spec) -> float:
    return spec.value(forward_stack(layers, x))


def kink_adjacent(layers, x, margin: float = 1e-3) -> bool:
    """True if any relu preactivation sits within margin of its kink.

    Central differences are invalid there (the loss is not differentiable
    in an h-neighborhood), so such configurations must be resampled, not
    compared. Zero-bias relu stacks hit the kink exactly whenever a whole
    layer goes dead for a sample, which is common at small widths.
    """
    out = x
    for layer in layers:
        z = out @ layer.weight.T + layer.bias
        if layer.activation == "relu":
            if (np.abs(z) < margin).any():
                return True
            out = np.maximum(z, 0.0)
        else:
            out = z
    return False


def fd_gradients(layers, x, spec, h: float = 1e-5):
    """(weight_grads, bias_grads, input_grad) by central differences."""
    weight_grads = []
    bias_grads = []
    for layer in layers:
        for arr, sink in ((layer.weight, weight_grads), (layer.bias, bias_grads)):
            grad = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                orig = arr[ix]
                arr[ix] = orig + h
                up = loss_at(layers, x, spec)
                arr[ix] = orig - h
                down = loss_at(layers, x, spec)
                arr[ix] = orig
                grad[ix] = (up - down) / (2.0 * h)
            sink.append(grad)
    input_grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        orig = x[ix]
        x[ix] = orig + h
        up = loss_at(layers, x, spec)
        x[ix] = orig - h
        down = loss_at(layers, x, spec)
        x[ix] = orig
        input_grad[ix] = (up - down) / (2.0 * h)
    return weight_grads, bias_grads, input_grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       zero_floor: float = 1e-7) -> float:
    """Worst coordinate-wise relative error; coordinates where both sides
    are below zero_floor count as exact matches."""
    a = np.asarray(analytic, dtype=np.float64)
    o = np.asarray(numeric, dtype=np.float64)
    both_zero = (np.abs(a) < zero_floor) & (np.abs(o) < zero_floor)
    denom = np.maximum(np.abs(a), np.abs(o))
    denom = np.where(both_zero, 1.0, denom)
    err = np.abs(a - o) / denom
    err = np.where(both_zero, 0.0, err)
    return float(err.max()) if err.size else 0.0
