"""Dense-network numerical kernel.

Forward passes, analytic reverse-mode gradients (with respect to both
parameters and inputs), classification losses, and SGD with momentum.
Everything is float64 and deterministic; the network shape is a plain
stack of dense layers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Tensor2D = np.ndarray

ACTIVATIONS = ("relu", "identity")

_PROB_FLOOR = 1e-12


def tensor2d(data, dtype=np.float64) -> Tensor2D:
    """Coerce to a finite, C-contiguous float64 matrix (rows x cols)."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("matrix contains non-finite entries")
    return arr


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"{what} contains non-finite entries")
    return arr


@dataclass
class DenseLayer:
    """One dense layer: y = activation(x @ W.T + b).

    weight is (out, in), bias is (1, out).
    """

    weight: Tensor2D
    bias: Tensor2D
    activation: str = "identity"

    def __post_init__(self):
        self.weight = tensor2d(self.weight)
        self.bias = tensor2d(self.bias)
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}"
            )
        if self.bias.shape != (1, self.weight.shape[0]):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight rows "
                f"{self.weight.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def create(cls, in_dim: int, out_dim: int, activation: str,
               rng: np.random.Generator) -> "DenseLayer":
        # Kaiming-uniform style: bound = sqrt(6 / fan_in)
        bound = np.sqrt(6.0 / in_dim)
        weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        bias = np.zeros((1, out_dim))
        return cls(weight=weight, bias=bias, activation=activation)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy(), self.activation)


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        # subgradient at 0 is 0
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def dense_forward(layer: DenseLayer, x: Tensor2D) -> Tensor2D:
    """Forward one batch (N, in) through a layer, returning (N, out)."""
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ValueError(
            f"input shape {x.shape} does not match layer weight shape "
            f"{layer.weight.shape}"
        )
    z = x @ layer.weight.T + layer.bias
    return _check_finite(_apply_activation(z, layer.activation), "dense output")


def forward_stack(layers: list[DenseLayer], x: Tensor2D) -> Tensor2D:
    out = x
    for layer in layers:
        out = dense_forward(layer, out)
    return out


def softmax(logits: Tensor2D, temperature: float = 1.0) -> Tensor2D:
    """Row-wise temperature softmax; each row sums to 1."""
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = logits / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return _check_finite(e / e.sum(axis=1, keepdims=True), "softmax output")


def onehot(labels: np.ndarray, num_classes: int) -> Tensor2D:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise IndexError(
            f"label out of range [0, {num_classes}): "
            f"min={labels.min()}, max={labels.max()}"
        )
    return labels


def cross_entropy(logits: Tensor2D, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    labels = _check_labels(labels, logits.shape[1])
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    nll = lse - logits[np.arange(logits.shape[0]), labels]
    return float(np.maximum(nll, 0.0).mean())


def kl_divergence(student_probs: Tensor2D, target_probs: Tensor2D) -> float:
    """Mean over rows of sum_c target * ln(target / student).

    Convention: 0 * ln(0 / q) = 0; the student side is floored at 1e-12
    so the value stays finite.
    """
    if student_probs.shape != target_probs.shape:
        raise ValueError(
            f"shape mismatch: student {student_probs.shape} vs "
            f"target {target_probs.shape}"
        )
    p = np.maximum(student_probs, _PROB_FLOOR)
    q = target_probs
    safe_q = np.where(q > 0.0, q, 1.0)
    terms = np.where(q > 0.0, q * (np.log(safe_q) - np.log(p)), 0.0)
    return float(np.maximum(terms.sum(axis=1), 0.0).mean())


@dataclass
class CELoss:
    """Cross-entropy against integer labels."""

    labels: np.ndarray

    def value(self, logits: Tensor2D) -> float:
        return cross_entropy(logits, self.labels)

    def logit_grad(self, logits: Tensor2D) -> Tensor2D:
        n = logits.shape[0]
        labels = _check_labels(self.labels, logits.shape[1])
        return (softmax(logits) - onehot(labels, logits.shape[1])) / n


@dataclass
class KLLoss:
    """KL to a fixed target distribution, student side at temperature T.

    value = KL(softmax(logits / T) || target_probs); the target is a
    constant (no gradient flows through it).
    """

    target_probs: Tensor2D
    temperature: float = 1.0

    def value(self, logits: Tensor2D) -> float:
        return kl_divergence(softmax(logits, self.temperature), self.target_probs)

    def logit_grad(self, logits: Tensor2D) -> Tensor2D:
        n = logits.shape[0]
        p = softmax(logits, self.temperature)
        q = self.target_probs
        qsum = q.sum(axis=1, keepdims=True)
        return (p * qsum - q) / (n * self.temperature)


@dataclass
class CombinedLoss:
    """(1 - alpha) * CE(logits, labels) + alpha * T**t_exponent * KL term.

    The KL term compares softmax(logits / T) with fixed target_probs.
    """

    labels: np.ndarray
    target_probs: Tensor2D
    alpha: float
    temperature: float
    t_exponent: int = 2

    def __post_init__(self):
        self._ce = CELoss(self.labels)
        self._kl = KLLoss(self.target_probs, self.temperature)

    @property
    def kl_weight(self) -> float:
        return self.alpha * self.temperature ** self.t_exponent

    def value(self, logits: Tensor2D) -> float:
        return ((1.0 - self.alpha) * self._ce.value(logits)
                + self.kl_weight * self._kl.value(logits))

    def logit_grad(self, logits: Tensor2D) -> Tensor2D:
        return ((1.0 - self.alpha) * self._ce.logit_grad(logits)
                + self.kl_weight * self._kl.logit_grad(logits))


LossSpec = CELoss | KLLoss | CombinedLoss


@dataclass
class GradientBundle:
    """Per-layer parameter gradients plus the gradient at the network input."""

    weight_grads: list[Tensor2D]
    bias_grads: list[Tensor2D]
    input_grad: Tensor2D | None = None

    def check_shapes(self, layers: list[DenseLayer]) -> None:
        for layer, gw, gb in zip(layers, self.weight_grads, self.bias_grads,
                                 strict=True):
            if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
                raise ValueError(
                    f"gradient shapes ({gw.shape}, {gb.shape}) do not mirror "
                    f"layer shapes ({layer.weight.shape}, {layer.bias.shape})"
                )


def backward(layers: list[DenseLayer], x: Tensor2D, spec: LossSpec) -> GradientBundle:
    """Exact reverse-mode gradients of the loss spec through a dense stack.

    Returns gradients for every layer's parameters and for the input x.
    """
    inputs = []
    preacts = []
    out = x
    for layer in layers:
        if out.shape[1] != layer.in_dim:
            raise ValueError(
                f"input shape {out.shape} does not match layer weight shape "
                f"{layer.weight.shape}"
            )
        inputs.append(out)
        z = out @ layer.weight.T + layer.bias
        preacts.append(z)
        out = _apply_activation(z, layer.activation)

    d_out = spec.logit_grad(out)
    weight_grads: list[Tensor2D] = [None] * len(layers)  # type: ignore[list-item]
    bias_grads: list[Tensor2D] = [None] * len(layers)  # type: ignore[list-item]
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        dz = d_out * _activation_grad(preacts[i], layer.activation)
        weight_grads[i] = dz.T @ inputs[i]
        bias_grads[i] = dz.sum(axis=0, keepdims=True)
        d_out = dz @ layer.weight

    bundle = GradientBundle(weight_grads, bias_grads, input_grad=_check_finite(d_out, "input gradient"))
    bundle.check_shapes(layers)
    return bundle


class SGD:
    """SGD with momentum buffers and L2 weight decay.

    v <- momentum * v + (grad + weight_decay * theta)
    theta <- theta - eta * v
    """

    def __init__(self, layers: list[DenseLayer], eta: float,
                 momentum: float = 0.0, weight_decay: float = 0.0):
        if eta <= 0:
            raise ValueError(f"learning rate must be > 0, got {eta}")
        self.layers = layers
        self.eta = eta
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._vel_w = [np.zeros_like(l.weight) for l in layers]
        self._vel_b = [np.zeros_like(l.bias) for l in layers]

    def step(self, grads: GradientBundle) -> None:
        grads.check_shapes(self.layers)
        for i, layer in enumerate(self.layers):
            gw = grads.weight_grads[i] + self.weight_decay * layer.weight
            gb = grads.bias_grads[i] + self.weight_decay * layer.bias
            self._vel_w[i] = self.momentum * self._vel_w[i] + gw
            self._vel_b[i] = self.momentum * self._vel_b[i] + gb
            layer.weight -= self.eta * self._vel_w[i]
            layer.bias -= self.eta * self._vel_b[i]
            _check_finite(layer.weight, "updated weight")
            _check_finite(layer.bias, "updated bias")


def sgd_update(layers: list[DenseLayer], grads: GradientBundle, eta: float,
               momentum: float = 0.0, weight_decay: float = 0.0,
               opt: SGD | None = None) -> SGD:
    """One-shot SGD step; pass the returned optimizer back in to keep momentum."""
    if opt is None:
        opt = SGD(layers, eta, momentum, weight_decay)
    opt.step(grads)
    return opt
