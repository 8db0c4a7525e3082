"""Class-wise unlearning: head-only attack distillation plus classical baselines.

The flagship routine rewrites only the classification head. Each epoch the
current student is frozen as a teacher; each batch the teacher's head is
attacked on forget-class latents, producing nearby wrong labels that the
student is pulled toward with a case-split cross-entropy and a distillation
term. Everything else in this module (retrain, finetune, negative gradient,
random labels, boundary shrink) exists to be compared against.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, pgd_full, pgd_partial
from .data import ForgetSplit, LabeledDataset
from .model import SplitClassifier, TrainConfig, build_model, train_original
from .nn import (
    CELoss,
    CombinedLoss,
    SGD,
    Tensor2D,
    backward,
    kl_divergence,
    softmax,
)

ATTACK_MODES = ("partial", "full")
DISTILL_MODES = ("double_softmax", "raw_logits")


@dataclass
class UnlearnConfig:
    """Settings for the head-only attack-distillation unlearner.

    attack_mode "full" and distill_mode "raw_logits" are ablation switches:
    the first attacks through the whole network instead of just the head,
    the second skips the inner softmax when building distillation targets.
    """

    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 5e-4
    alpha: float = 0.5
    temperature: float = 4.0
    t_exponent: int = 2
    attack: AttackConfig = field(default_factory=AttackConfig)
    attack_mode: str = "partial"
    distill_mode: str = "double_softmax"
    early_stop: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.attack_mode not in ATTACK_MODES:
            raise ValueError(f"attack_mode must be one of {ATTACK_MODES}")
        if self.distill_mode not in DISTILL_MODES:
            raise ValueError(f"distill_mode must be one of {DISTILL_MODES}")


@dataclass
class BaselineConfig:
    """Shared knobs for the comparison methods."""

    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    early_stop: bool = True
    attack: AttackConfig = field(default_factory=AttackConfig)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class UnlearnStepTrace:
    """One optimizer step worth of diagnostics."""

    epoch: int
    batch: int
    ce_loss: float
    distill_loss: float
    total_loss: float
    forget_error_frac: float  # fraction of the forget set now misclassified


@dataclass
class UnlearnResult:
    model: SplitClassifier
    method: str
    epochs_run: int
    early_stopped: bool
    wall_seconds: float
    data_used: int
    traces: list[UnlearnStepTrace] = field(default_factory=list)


def select_ce_targets(student_logits: Tensor2D, true_labels: np.ndarray,
                      adv_labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Case-split label choice for the forget-set cross-entropy.

    A sample the student still gets right is pushed toward its attack label;
    a sample already misclassified is held at the student's own prediction.
    Returns (targets, unlearned_mask).
    """
    student_pred = np.argmax(student_logits, axis=1)
    unlearned = student_pred != np.asarray(true_labels, dtype=np.int64)
    targets = np.where(unlearned, student_pred,
                       np.asarray(adv_labels, dtype=np.int64))
    return targets, unlearned


def select_distill_targets(teacher_adv_logits: Tensor2D,
                           student_clean_logits: Tensor2D,
                           unlearned_mask: np.ndarray,
                           temperature: float,
                           distill_mode: str = "double_softmax") -> Tensor2D:
    """Target distribution for the distillation term.

    Rows not yet unlearned follow the attacked teacher, already-unlearned
    rows follow the student itself. In double_softmax mode both sources
    pass through a plain softmax before the temperature softmax; raw_logits
    mode feeds the logits straight in.
    """
    if distill_mode == "double_softmax":
        teacher_side = softmax(teacher_adv_logits)
        student_side = softmax(student_clean_logits)
    elif distill_mode == "raw_logits":
        teacher_side = teacher_adv_logits
        student_side = student_clean_logits
    else:
        raise ValueError(f"distill_mode must be one of {DISTILL_MODES}")
    z = np.where(unlearned_mask[:, None], student_side, teacher_side)
    return softmax(z, temperature=temperature)


def _forget_error_frac(student: SplitClassifier, latents: Tensor2D,
                       labels: np.ndarray) -> float:
    return float((student.predict_from_latent(latents) != labels).mean())


def layer_attack_unlearn(model: SplitClassifier, split: ForgetSplit,
                         config: UnlearnConfig) -> UnlearnResult:
    """Forget the split's forget classes by rewriting only the head.

    The input model is left untouched. Feature latents are computed once up
    front (the feature stack never changes); per epoch the student's head is
    cloned into a teacher, per batch the teacher is attacked and the student
    takes one SGD step on the combined loss. Stops early once every forget
    sample is misclassified, checked against the whole forget set after each
    step.
    """
    forget = split.forget
    if len(forget) == 0:
        raise ValueError("forget set is empty")
    t0 = time.perf_counter()
    student = model.copy()
    latents = student.latent(forget.features)
    labels = forget.labels
    rng = np.random.default_rng(config.seed)
    opt = SGD(student.head_layers, config.lr, config.momentum,
              config.weight_decay)
    result = UnlearnResult(
        model=student,
        method="lau" if config.attack_mode == "partial" else "lau_full_attack",
        epochs_run=0,
        early_stopped=False,
        wall_seconds=0.0,
        data_used=len(forget),
    )
    n = len(forget)
    done = False
    for epoch in range(config.epochs):
        teacher = student.clone_head()
        order = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            batch_latents = latents[idx]
            batch_labels = labels[idx]

            if config.attack_mode == "partial":
                attacked = pgd_partial(teacher, batch_latents, batch_labels,
                                       config.attack)
                teacher_adv_logits = teacher.head_logits(attacked.examples)
            else:
                attacked = pgd_full(teacher, forget.features[idx], batch_labels,
                                    config.attack, clip01=forget.image_like)
                teacher_adv_logits = teacher.logits(attacked.examples)

            student_logits = student.head_logits(batch_latents)
            targets, unlearned = select_ce_targets(
                student_logits, batch_labels, attacked.adv_labels)
            target_probs = select_distill_targets(
                teacher_adv_logits, student_logits, unlearned,
                config.temperature, config.distill_mode)

            spec = CombinedLoss(
                labels=targets,
                target_probs=target_probs,
                alpha=config.alpha,
                temperature=config.temperature,
                t_exponent=config.t_exponent,
            )
            ce_before = CELoss(targets).value(student_logits)
            distill_before = kl_divergence(
                softmax(student_logits, temperature=config.temperature),
                target_probs)
            total_before = spec.value(student_logits)
            opt.step(backward(student.head_layers, batch_latents, spec))

            err = _forget_error_frac(student, latents, labels)
            result.traces.append(UnlearnStepTrace(
                epoch=epoch,
                batch=batch_no,
                ce_loss=ce_before,
                distill_loss=distill_before,
                total_loss=total_before,
                forget_error_frac=err,
            ))
            if config.early_stop and err == 1.0:
                done = True
                break
        result.epochs_run = epoch + 1
        if done:
            result.early_stopped = True
            break
    result.wall_seconds = time.perf_counter() - t0
    return result


def _widths(model: SplitClassifier) -> tuple[tuple[int, ...], tuple[int, ...]]:
    feature_widths = tuple(l.out_dim for l in model.feature_layers)
    head_widths = tuple(l.out_dim for l in model.head_layers[:-1])
    return feature_widths, head_widths


def retrain_baseline(model: SplitClassifier, split: ForgetSplit,
                     config: BaselineConfig) -> UnlearnResult:
    """Gold standard: train a fresh model of the same shape on retain data only."""
    t0 = time.perf_counter()
    feature_widths, head_widths = _widths(model)
    fresh = build_model(model.input_dim, model.num_classes,
                        feature_widths=feature_widths,
                        head_widths=head_widths, seed=config.seed)
    train_original(fresh, split.retain, TrainConfig(
        epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
        momentum=config.momentum, weight_decay=config.weight_decay,
        seed=config.seed))
    return UnlearnResult(
        model=fresh, method="retrain", epochs_run=config.epochs,
        early_stopped=False, wall_seconds=time.perf_counter() - t0,
        data_used=len(split.retain))


def finetune_baseline(model: SplitClassifier, split: ForgetSplit,
                      config: BaselineConfig) -> UnlearnResult:
    """Keep training the whole model on retain data at an aggressive rate.

    Forgetting here is incidental catastrophic drift, so the learning rate
    is typically set well above the original training rate.
    """
    t0 = time.perf_counter()
    tuned = model.copy()
    train_original(tuned, split.retain, TrainConfig(
        epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
        momentum=config.momentum, weight_decay=config.weight_decay,
        seed=config.seed))
    return UnlearnResult(
        model=tuned, method="finetune", epochs_run=config.epochs,
        early_stopped=False, wall_seconds=time.perf_counter() - t0,
        data_used=len(split.retain))


def _full_model_loop(model: SplitClassifier, forget: LabeledDataset,
                     config: BaselineConfig, method: str,
                     batch_step) -> UnlearnResult:
    """Shared epoch/batch scaffold for forget-set baselines on the full model.

    batch_step(working, idx, epoch, epoch_rng, opt) performs one update.
    Early stop fires once the whole forget set is misclassified.
    """
    t0 = time.perf_counter()
    working = model.copy()
    rng = np.random.default_rng(config.seed)
    opt = SGD(working.all_layers, config.lr, config.momentum,
              config.weight_decay)
    result = UnlearnResult(
        model=working, method=method, epochs_run=0, early_stopped=False,
        wall_seconds=0.0, data_used=len(forget))
    n = len(forget)
    done = False
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_rng = np.random.default_rng((config.seed, epoch))
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_step(working, idx, epoch, epoch_rng, opt)
            if config.early_stop:
                wrong = working.predict(forget.features) != forget.labels
                if wrong.all():
                    done = True
                    break
        result.epochs_run = epoch + 1
        if done:
            result.early_stopped = True
            break
    result.wall_seconds = time.perf_counter() - t0
    return result


def neg_gradient_baseline(model: SplitClassifier, split: ForgetSplit,
                          config: BaselineConfig) -> UnlearnResult:
    """Gradient ascent on the forget set: step along the negated CE gradient."""
    forget = split.forget

    def batch_step(working, idx, epoch, epoch_rng, opt):
        grads = backward(working.all_layers, forget.features[idx],
                         CELoss(forget.labels[idx]))
        for g in grads.weight_grads:
            np.negative(g, out=g)
        for g in grads.bias_grads:
            np.negative(g, out=g)
        opt.step(grads)

    return _full_model_loop(model, forget, config, "neg_grad", batch_step)


def random_label_baseline(model: SplitClassifier, split: ForgetSplit,
                          config: BaselineConfig) -> UnlearnResult:
    """Fit the forget set to fresh uniform wrong labels, resampled each epoch.

    Labels are drawn from the classes outside the forget set.
    """
    forget = split.forget
    candidates = np.array(
        sorted(set(range(forget.num_classes)) - set(split.forget_classes)),
        dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("no non-forget classes left to relabel toward")
    state = {"labels": None, "epoch": -1}

    def batch_step(working, idx, epoch, epoch_rng, opt):
        if state["epoch"] != epoch:
            state["labels"] = epoch_rng.choice(candidates, size=len(forget))
            state["epoch"] = epoch
        grads = backward(working.all_layers, forget.features[idx],
                         CELoss(state["labels"][idx]))
        opt.step(grads)

    return _full_model_loop(model, forget, config, "random_label", batch_step)


def boundary_shrink_baseline(model: SplitClassifier, split: ForgetSplit,
                             config: BaselineConfig) -> UnlearnResult:
    """Pull decision boundaries inward: attack each batch through the whole
    current model, then fit the clean points to their adversarial labels."""
    forget = split.forget

    def batch_step(working, idx, epoch, epoch_rng, opt):
        attacked = pgd_full(working, forget.features[idx], forget.labels[idx],
                            config.attack, clip01=forget.image_like)
        grads = backward(working.all_layers, forget.features[idx],
                         CELoss(attacked.adv_labels))
        opt.step(grads)

    return _full_model_loop(model, forget, config, "boundary_shrink", batch_step)


BASELINES = {
    "retrain": retrain_baseline,
    "finetune": finetune_baseline,
    "neg_grad": neg_gradient_baseline,
    "random_label": random_label_baseline,
    "boundary_shrink": boundary_shrink_baseline,
}


def run_method(method: str, model: SplitClassifier, split: ForgetSplit,
               config) -> UnlearnResult:
    """Dispatch a named unlearning method; 'lau' takes an UnlearnConfig,
    baselines a BaselineConfig."""
    if method == "lau":
        if not isinstance(config, UnlearnConfig):
            raise TypeError("lau requires an UnlearnConfig")
        return layer_attack_unlearn(model, split, config)
    if method in BASELINES:
        if not isinstance(config, BaselineConfig):
            raise TypeError(f"{method} requires a BaselineConfig")
        return BASELINES[method](model, split, config)
    raise ValueError(
        f"unknown method {method!r}; expected one of "
        f"{('lau', *BASELINES)}"
    )
