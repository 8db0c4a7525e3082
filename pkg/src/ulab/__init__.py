"""Desk-scale laboratory for class-wise machine unlearning."""

from .attacks import AdversarialBatch, AttackConfig, pgd_full, pgd_partial
from .data import (
    ForgetSplit,
    LabeledDataset,
    load_idx,
    split_forget_retain,
    subsample,
    synth_blobs,
    synth_blobs_train_test,
)
from .metrics import EvalReport, accuracy, emit_report, evaluate, unlearning_score
from .model import (
    SplitClassifier,
    TrainConfig,
    TrainReport,
    build_model,
    dump_latents,
    load_checkpoint,
    save_checkpoint,
    train_original,
)
from .nn import (
    CELoss,
    CombinedLoss,
    DenseLayer,
    GradientBundle,
    KLLoss,
    SGD,
    backward,
    cross_entropy,
    forward_stack,
    kl_divergence,
    onehot,
    softmax,
)
from .unlearn import (
    BASELINES,
    BaselineConfig,
    UnlearnConfig,
    UnlearnResult,
    UnlearnStepTrace,
    boundary_shrink_baseline,
    finetune_baseline,
    layer_attack_unlearn,
    neg_gradient_baseline,
    random_label_baseline,
    retrain_baseline,
    run_method,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialBatch", "AttackConfig", "pgd_full", "pgd_partial",
    "ForgetSplit", "LabeledDataset", "load_idx", "split_forget_retain",
    "subsample", "synth_blobs", "synth_blobs_train_test",
    "EvalReport", "accuracy", "emit_report", "evaluate", "unlearning_score",
    "SplitClassifier", "TrainConfig", "TrainReport", "build_model",
    "dump_latents", "load_checkpoint", "save_checkpoint", "train_original",
    "CELoss", "CombinedLoss", "DenseLayer", "GradientBundle", "KLLoss", "SGD",
    "backward", "cross_entropy", "forward_stack", "kl_divergence", "onehot",
    "softmax",
    "BASELINES", "BaselineConfig", "UnlearnConfig", "UnlearnResult",
    "UnlearnStepTrace", "boundary_shrink_baseline", "finetune_baseline",
    "layer_attack_unlearn", "neg_gradient_baseline", "random_label_baseline",
    "retrain_baseline", "run_method",
]
