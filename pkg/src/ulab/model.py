"""Split classifier: a feature stack feeding a separable classification head.

The split is the load-bearing structure here. Unlearning updates only the
head layers while the feature stack stays frozen, so the model exposes the
latent representation at the split point as a first-class value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .nn import (
    ACTIVATIONS,
    CELoss,
    DenseLayer,
    SGD,
    Tensor2D,
    backward,
    forward_stack,
    tensor2d,
)

CHECKPOINT_MAGIC = "ULAB1"


def _check_chain(layers: list[DenseLayer], what: str) -> None:
    for a, b in zip(layers, layers[1:]):
        if a.out_dim != b.in_dim:
            raise ValueError(
                f"{what} layers do not chain: {a.out_dim} -> {b.in_dim}"
            )


@dataclass
class SplitClassifier:
    """Feature layers followed by head layers; logits come out of the head.

    feature_layers may be empty, in which case the latent is the raw input.
    """

    feature_layers: list[DenseLayer]
    head_layers: list[DenseLayer]
    num_classes: int

    def __post_init__(self):
        if not self.head_layers:
            raise ValueError("head_layers must be non-empty")
        _check_chain(self.feature_layers, "feature")
        _check_chain(self.head_layers, "head")
        if self.feature_layers:
            f_out = self.feature_layers[-1].out_dim
            h_in = self.head_layers[0].in_dim
            if f_out != h_in:
                raise ValueError(
                    f"feature output dim {f_out} does not match head input dim {h_in}"
                )
        if self.head_layers[-1].out_dim != self.num_classes:
            raise ValueError(
                f"head output dim {self.head_layers[-1].out_dim} does not match "
                f"num_classes {self.num_classes}"
            )
        if self.head_layers[-1].activation != "identity":
            raise ValueError("final head layer must have identity activation")

    @property
    def input_dim(self) -> int:
        first = self.feature_layers[0] if self.feature_layers else self.head_layers[0]
        return first.in_dim

    @property
    def latent_dim(self) -> int:
        return self.head_layers[0].in_dim

    @property
    def all_layers(self) -> list[DenseLayer]:
        return self.feature_layers + self.head_layers

    def latent(self, x: Tensor2D) -> Tensor2D:
        """Representation at the split point for a batch of inputs."""
        return forward_stack(self.feature_layers, tensor2d(x))

    def head_logits(self, latent: Tensor2D) -> Tensor2D:
        return forward_stack(self.head_layers, tensor2d(latent))

    def logits(self, x: Tensor2D) -> Tensor2D:
        return self.head_logits(self.latent(x))

    def predict_from_latent(self, latent: Tensor2D) -> np.ndarray:
        # np.argmax breaks ties toward the lowest class index
        return np.argmax(self.head_logits(latent), axis=1)

    def predict(self, x: Tensor2D) -> np.ndarray:
        return self.predict_from_latent(self.latent(x))

    def copy(self) -> "SplitClassifier":
        return SplitClassifier(
            feature_layers=[l.copy() for l in self.feature_layers],
            head_layers=[l.copy() for l in self.head_layers],
            num_classes=self.num_classes,
        )

    def clone_head(self) -> "SplitClassifier":
        """Copy whose head is independent; feature layers are shared by reference."""
        return SplitClassifier(
            feature_layers=self.feature_layers,
            head_layers=[l.copy() for l in self.head_layers],
            num_classes=self.num_classes,
        )


def build_model(input_dim: int, num_classes: int,
                feature_widths: tuple[int, ...] = (256, 64),
                head_widths: tuple[int, ...] = (),
                seed: int = 0) -> SplitClassifier:
    """Fresh ReLU feature stack plus a linear head, seeded initialization.

    head_widths lists hidden head layers; the final num_classes layer is
    always appended with identity activation.
    """
    if input_dim < 1 or num_classes < 2:
        raise ValueError("need input_dim >= 1 and num_classes >= 2")
    rng = np.random.default_rng(seed)
    feature_layers = []
    width_in = input_dim
    for width in feature_widths:
        feature_layers.append(DenseLayer.create(width_in, width, "relu", rng))
        width_in = width
    head_layers = []
    for width in head_widths:
        head_layers.append(DenseLayer.create(width_in, width, "relu", rng))
        width_in = width
    head_layers.append(DenseLayer.create(width_in, num_classes, "identity", rng))
    return SplitClassifier(feature_layers, head_layers, num_classes)


@dataclass
class TrainConfig:
    """Mini-batch SGD settings for training the full model from scratch."""

    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_milestones: tuple[int, ...] = ()
    lr_gamma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainReport:
    model: SplitClassifier
    epoch_train_acc: list[float] = field(default_factory=list)

    @property
    def final_train_acc(self) -> float:
        return self.epoch_train_acc[-1] if self.epoch_train_acc else float("nan")


def _train_accuracy(model: SplitClassifier, dataset: LabeledDataset) -> float:
    pred = model.predict(dataset.features)
    return float((pred == dataset.labels).mean() * 100.0)


def train_original(model: SplitClassifier, dataset: LabeledDataset,
                   config: TrainConfig) -> TrainReport:
    """Train every layer of the model in place with cross-entropy SGD.

    Zero epochs returns the model untouched. Batch order reshuffles each
    epoch from the config seed; the learning rate drops by lr_gamma at
    each milestone epoch.
    """
    if dataset.num_classes != model.num_classes:
        raise ValueError(
            f"dataset has {dataset.num_classes} classes, model expects "
            f"{model.num_classes}"
        )
    rng = np.random.default_rng(config.seed)
    layers = model.all_layers
    opt = SGD(layers, config.lr, config.momentum, config.weight_decay)
    report = TrainReport(model=model)
    n = len(dataset)
    for epoch in range(config.epochs):
        if epoch in config.lr_milestones:
            opt.eta *= config.lr_gamma
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            spec = CELoss(dataset.labels[idx])
            opt.step(backward(layers, dataset.features[idx], spec))
        for layer in layers:
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise FloatingPointError(
                    f"non-finite parameters after epoch {epoch}"
                )
        report.epoch_train_acc.append(_train_accuracy(model, dataset))
    return report


def _layer_to_json(layer: DenseLayer) -> dict:
    return {
        "weight": layer.weight.tolist(),
        "bias": layer.bias[0].tolist(),
        "activation": layer.activation,
    }


def _layer_from_json(obj: dict, where: str) -> DenseLayer:
    try:
        weight = tensor2d(obj["weight"])
        bias = np.asarray(obj["bias"], dtype=np.float64).reshape(1, -1)
        activation = obj["activation"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed layer in {where}: {exc}") from exc
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r} in {where}")
    return DenseLayer(weight=weight, bias=bias, activation=activation)


def save_checkpoint(model: SplitClassifier, path: str) -> None:
    """Write the model as JSON; float values round-trip exactly via repr."""
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "num_classes": model.num_classes,
        "feature_layers": [_layer_to_json(l) for l in model.feature_layers],
        "head_layers": [_layer_to_json(l) for l in model.head_layers],
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path: str) -> SplitClassifier:
    with open(path) as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a valid checkpoint: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(
            f"{path}: missing checkpoint magic {CHECKPOINT_MAGIC!r}"
        )
    for key in ("num_classes", "feature_layers", "head_layers"):
        if key not in payload:
            raise ValueError(f"{path}: checkpoint missing field {key!r}")
    return SplitClassifier(
        feature_layers=[_layer_from_json(o, f"{path} feature_layers")
                        for o in payload["feature_layers"]],
        head_layers=[_layer_from_json(o, f"{path} head_layers")
                     for o in payload["head_layers"]],
        num_classes=int(payload["num_classes"]),
    )


def dump_latents(model: SplitClassifier, dataset: LabeledDataset,
                 path: str) -> None:
    """CSV of split-point representations: latent_0..latent_{D-1}, label."""
    latents = model.latent(dataset.features)
    dim = latents.shape[1]
    with open(path, "w") as f:
        f.write(",".join([f"latent_{i}" for i in range(dim)] + ["label"]) + "\n")
        for row, label in zip(latents, dataset.labels):
            f.write(",".join(repr(v) for v in row.tolist())
                    + f",{int(label)}\n")
