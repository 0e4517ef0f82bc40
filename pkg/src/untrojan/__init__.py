"""Desk-scale lab for planting and unlearning trojan triggers in tiny text classifiers.

The functional core lives in model / data / ewc / unlearn / metrics;
estimator wraps it in a scikit-learn style fit/predict API, and cli / runner
drive reproducible experiment sweeps from config files.
"""

from .checkpoint import load_checkpoint, load_params, save_fisher, save_params
from .data import (
    Dataset,
    PoisonConfig,
    Sample,
    TriggerSpec,
    gen_synthetic,
    inject_trigger,
    make_asr_eval_set,
    poison_dataset,
    read_jsonl,
    split_clean_subset,
    write_jsonl,
)
from .errors import InvalidInput, NumericalError
from .estimator import GradientAscentUnlearner, LyaUnlearner, TokenClassifier
from .ewc import FisherDiag, estimate_fisher, ewc_grad, ewc_penalty
from .metrics import EpochReport, EvalSuite, accuracy, asr, poisoned_accuracy
from .model import (
    Gradient,
    ModelArch,
    ParamVector,
    apply_step,
    forward,
    grad_ce,
    init_params,
    loss_ce,
    train_ce,
)
from .unlearn import (
    UnlearnConfig,
    UnlearnResult,
    UnlearnState,
    detect_threshold_crossing,
    finetune_clean,
    retrain_clean,
    total_loss,
    unlearn_ga,
    unlearn_lya,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EpochReport",
    "EvalSuite",
    "FisherDiag",
    "Gradient",
    "GradientAscentUnlearner",
    "InvalidInput",
    "LyaUnlearner",
    "ModelArch",
    "NumericalError",
    "ParamVector",
    "PoisonConfig",
    "Sample",
    "TokenClassifier",
    "TriggerSpec",
    "UnlearnConfig",
    "UnlearnResult",
    "UnlearnState",
    "accuracy",
    "apply_step",
    "asr",
    "detect_threshold_crossing",
    "estimate_fisher",
    "ewc_grad",
    "ewc_penalty",
    "finetune_clean",
    "forward",
    "gen_synthetic",
    "grad_ce",
    "init_params",
    "inject_trigger",
    "load_checkpoint",
    "load_params",
    "loss_ce",
    "make_asr_eval_set",
    "poison_dataset",
    "poisoned_accuracy",
    "read_jsonl",
    "retrain_clean",
    "save_fisher",
    "save_params",
    "split_clean_subset",
    "total_loss",
    "train_ce",
    "unlearn_ga",
    "unlearn_lya",
    "write_jsonl",
]
