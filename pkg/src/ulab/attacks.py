"""Projected gradient ascent attacks: full-model on inputs, head-only on latents.

Both attacks climb the cross-entropy of the true labels with sign steps and
project back into an L-infinity ball around the starting point. The head-only
variant differentiates through the classification head alone, which is the
cheap path when the feature stack is deep and frozen.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SplitClassifier
from .nn import CELoss, Tensor2D, backward, tensor2d


@dataclass
class AttackConfig:
    """L-infinity PGD settings. step_size of None means epsilon / steps."""

    epsilon: float = 1.0
    steps: int = 10
    step_size: float | None = None
    rand_init: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")

    @property
    def effective_step(self) -> float:
        return self.step_size if self.step_size is not None else self.epsilon / self.steps


@dataclass
class AdversarialBatch:
    """Attacked points plus the attacked model's predictions on them."""

    examples: Tensor2D
    adv_labels: np.ndarray
    flipped: np.ndarray  # bool mask: prediction moved off the true label

    def __post_init__(self):
        n = self.examples.shape[0]
        if self.adv_labels.shape != (n,) or self.flipped.shape != (n,):
            raise ValueError(
                f"per-sample fields must have length {n}, got "
                f"{self.adv_labels.shape} and {self.flipped.shape}"
            )


def _pgd(start: Tensor2D, labels: np.ndarray, layers, config: AttackConfig,
         rng: np.random.Generator | None, clip01: bool) -> Tensor2D:
    start = tensor2d(start)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (start.shape[0],):
        raise ValueError(
            f"labels shape {labels.shape} does not match batch of {start.shape[0]}"
        )
    eps = config.epsilon
    adv = start.copy()
    if config.rand_init:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        adv = adv + rng.uniform(-eps, eps, size=adv.shape)
    lo, hi = start - eps, start + eps
    adv = np.clip(adv, lo, hi)
    if clip01:
        adv = np.clip(adv, 0.0, 1.0)
    step = config.effective_step
    for _ in range(config.steps):
        grad = backward(layers, adv, CELoss(labels)).input_grad
        adv = adv + step * np.sign(grad)
        adv = np.clip(adv, lo, hi)
        if clip01:
            adv = np.clip(adv, 0.0, 1.0)
    return adv


def pgd_full(model: SplitClassifier, x: Tensor2D, labels: np.ndarray,
             config: AttackConfig, rng: np.random.Generator | None = None,
             clip01: bool = False) -> AdversarialBatch:
    """PGD on the raw inputs, gradients through feature stack and head.

    clip01 keeps the attacked points inside [0, 1]; use it for image data
    only, never for unbounded latents.
    """
    adv = _pgd(x, labels, model.all_layers, config, rng, clip01)
    adv_labels = model.predict(adv)
    return AdversarialBatch(
        examples=adv,
        adv_labels=adv_labels,
        flipped=adv_labels != np.asarray(labels, dtype=np.int64),
    )


def pgd_partial(model: SplitClassifier, latents: Tensor2D, labels: np.ndarray,
                config: AttackConfig,
                rng: np.random.Generator | None = None) -> AdversarialBatch:
    """PGD on split-point latents, gradients through the head only.

    Latents are unbounded, so no [0, 1] clipping is ever applied here.
    """
    adv = _pgd(latents, labels, model.head_layers, config, rng, clip01=False)
    adv_labels = model.predict_from_latent(adv)
    return AdversarialBatch(
        examples=adv,
        adv_labels=adv_labels,
        flipped=adv_labels != np.asarray(labels, dtype=np.int64),
    )
