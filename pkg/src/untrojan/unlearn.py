"""Trojan unlearning by gradient ascent with importance-weighted anchoring.

The combined objective, minimized by plain gradient steps, is

    lam * (anchor_penalty(clean) - anchor_penalty(poison)) - mean_ce(poison batch)

so the cross-entropy on poisoned data is pushed up while parameters that
matter for clean data are held near their starting point. With lam = 0 the
loop degenerates exactly to the vanilla gradient-ascent baseline. Each run
also tracks the epoch at which accuracy-on-trojan-labels first crosses below
50% (random behavior in a binary task) and keeps that checkpoint as an
early-stopping candidate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import InvalidInput, NumericalError
from .ewc import FisherDiag, estimate_fisher, ewc_grad, ewc_penalty
from .metrics import EpochReport, EvalSuite, poisoned_accuracy
from .model import (
    Gradient,
    ModelArch,
    ParamVector,
    apply_step,
    ce_batch,
    init_params,
    mean_ce,
    train_ce,
)

CROSSING_LEVEL = 50.0

STOP_MAX_EPOCHS = "max_epochs"
STOP_BELOW_THRESHOLD = "below_p_thresh"
STOP_NUMERICAL_ERROR = "numerical_error"


@dataclass(frozen=True)
class UnlearnConfig:
    """Hyperparameters of one unlearning run.

    lam weighs the anchoring terms; p_thresh is the accuracy-on-trojan-labels
    level below which the run stops early (0 never stops). With
    exclude_poison_ewc the poison-side anchoring term is dropped from the
    objective.
    """

    lam: float
    learning_rate: float
    batch_size: int
    max_epochs: int
    p_thresh: float = 0.0
    seed: int = 0
    exclude_poison_ewc: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidInput(f"lam must be >= 0, got {self.lam}")
        if self.learning_rate < 0:
            raise InvalidInput(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvalidInput(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise InvalidInput(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0.0 <= self.p_thresh <= 100.0:
            raise InvalidInput(f"p_thresh must lie in [0, 100], got {self.p_thresh}")


@dataclass
class UnlearnState:
    """Mutable loop state; exposed for introspection and tests."""

    params: ParamVector
    epoch: int = 0
    p_prev: float = 100.0
    threshold_epoch: int = 0
    history: list[EpochReport] = field(default_factory=list)


@dataclass(frozen=True)
class UnlearnResult:
    """Outcome of a run: final and threshold checkpoints plus the full history.

    epoch_params[e] is the parameter vector after epoch e (index 0 is the
    starting point), so threshold_params == epoch_params[threshold_epoch].
    """

    final_params: ParamVector
    threshold_params: ParamVector
    threshold_epoch: int
    stop_reason: str
    history: tuple[EpochReport, ...]
    epoch_params: tuple[ParamVector, ...]

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def detect_threshold_crossing(
    p_prev: float, p_current: float, epoch: int, threshold_epoch: int
) -> int:
    """Update the threshold epoch when accuracy-on-trojan-labels crosses below 50.

    On a crossing, the side nearer to 50 wins: epoch-1 if the previous value
    was strictly closer, else the current epoch. Without a crossing the input
    threshold_epoch is returned unchanged. Comparisons are strict, so a value
    sitting exactly on 50 does not count as crossed.
    """
    if not (0.0 <= p_prev <= 100.0 and 0.0 <= p_current <= 100.0):
        raise InvalidInput("accuracy percentages must lie in [0, 100]")
    if epoch < 1:
        raise InvalidInput(f"epoch must be >= 1, got {epoch}")
    if p_current < CROSSING_LEVEL and p_prev >= CROSSING_LEVEL:
        if abs(p_prev - CROSSING_LEVEL) < abs(p_current - CROSSING_LEVEL):
            return epoch - 1
        return epoch
    return threshold_epoch


def total_loss(
    current: ParamVector,
    anchor: ParamVector,
    fisher_clean: FisherDiag,
    fisher_poison: FisherDiag,
    poison_batch,
    cfg: UnlearnConfig,
) -> tuple[float, Gradient]:
    """Value and exact gradient of the combined unlearning objective on one batch."""
    if len(poison_batch) == 0:
        raise InvalidInput("poison batch must be non-empty")
    if not (len(current) == len(anchor) == len(fisher_clean) == len(fisher_poison)):
        raise InvalidInput("parameter, anchor and importance lengths must all match")
    ce_value, ce_grad_batch = ce_batch(current.arch, current, poison_batch)
    value = -ce_value
    grad = -ce_grad_batch.values
    if cfg.lam != 0.0:
        value += cfg.lam * ewc_penalty(fisher_clean, anchor, current)
        grad = grad + cfg.lam * ewc_grad(fisher_clean, anchor, current).values
        if not cfg.exclude_poison_ewc:
            value -= cfg.lam * ewc_penalty(fisher_poison, anchor, current)
            grad = grad - cfg.lam * ewc_grad(fisher_poison, anchor, current).values
    if not np.isfinite(value):
        raise NumericalError("unlearning objective became non-finite")
    return float(value), Gradient(grad)


def _run_loop(
    arch: ModelArch,
    start: ParamVector,
    d_poison: Dataset,
    cfg: UnlearnConfig,
    batch_objective,
    loss_components,
    eval_suite: EvalSuite | None,
) -> UnlearnResult:
    """Shared epoch loop: shuffle, step over mini-batches, score, detect, stop."""
    rng = np.random.default_rng(cfg.seed)
    state = UnlearnState(params=start, threshold_epoch=cfg.max_epochs)
    snapshots = [start]
    stop_reason = STOP_MAX_EPOCHS

    def partial(reason: str) -> UnlearnResult:
        epochs_done = len(snapshots) - 1
        threshold = min(state.threshold_epoch, epochs_done)
        return UnlearnResult(
            final_params=snapshots[-1],
            threshold_params=snapshots[threshold],
            threshold_epoch=threshold,
            stop_reason=reason,
            history=tuple(state.history),
            epoch_params=tuple(snapshots),
        )

    for epoch in range(1, cfg.max_epochs + 1):
        state.epoch = epoch
        order = rng.permutation(len(d_poison))
        try:
            for lo in range(0, len(order), cfg.batch_size):
                batch = [d_poison[i] for i in order[lo : lo + cfg.batch_size]]
                _, grad = batch_objective(state.params, batch)
                state.params = apply_step(state.params, grad, cfg.learning_rate)
        except NumericalError as err:
            raise NumericalError(
                f"run diverged during epoch {epoch}: {err}", partial_result=partial(STOP_NUMERICAL_ERROR)
            ) from err

        p_current = poisoned_accuracy(arch, state.params, d_poison)
        state.threshold_epoch = detect_threshold_crossing(
            state.p_prev, p_current, epoch, state.threshold_epoch
        )
        clean_acc, attack = (
            eval_suite.evaluate(arch, state.params) if eval_suite else (float("nan"), float("nan"))
        )
        ce_value, ewc_clean_value, ewc_poison_value, objective = loss_components(state.params)
        state.history.append(
            EpochReport(
                epoch=epoch,
                clean_accuracy=clean_acc,
                asr=attack,
                poisoned_accuracy=p_current,
                loss_ce_poison=ce_value,
                ewc_clean=ewc_clean_value,
                ewc_poison=ewc_poison_value,
                total_loss=objective,
            )
        )
        snapshots.append(state.params)
        state.p_prev = p_current
        if p_current < cfg.p_thresh:
            stop_reason = STOP_BELOW_THRESHOLD
            break

    return partial(stop_reason)


def unlearn_lya(
    start: ParamVector,
    full_dataset: Dataset,
    d_poison: Dataset,
    d_clean: Dataset,
    cfg: UnlearnConfig,
    eval_suite: EvalSuite | None = None,
) -> UnlearnResult:
    """Ascent on poisoned cross-entropy with importance anchoring (the lya method).

    Importance is estimated once at the starting parameters, on d_clean and
    d_poison separately, and held fixed for the whole run. full_dataset is
    the set both subsets were carved from; only the subsets drive updates.
    """
    if len(full_dataset) == 0:
        raise InvalidInput("full dataset must be non-empty")
    if len(d_poison) == 0 or len(d_clean) == 0:
        raise InvalidInput("poisoned and clean subsets must both be non-empty")
    if len(d_clean) != len(d_poison):
        warnings.warn(
            f"clean subset size {len(d_clean)} != poisoned subset size {len(d_poison)}; "
            "anchoring terms will be unbalanced",
            stacklevel=2,
        )
    arch = start.arch
    fisher_clean = estimate_fisher(arch, start, d_clean, source="clean")
    fisher_poison = estimate_fisher(arch, start, d_poison, source="poison")

    def objective(params, batch):
        return total_loss(params, start, fisher_clean, fisher_poison, batch, cfg)

    def components(params):
        ce_value = mean_ce(arch, params, d_poison)
        ewc_clean_value = ewc_penalty(fisher_clean, start, params)
        ewc_poison_value = ewc_penalty(fisher_poison, start, params)
        objective_value = cfg.lam * (
            ewc_clean_value - (0.0 if cfg.exclude_poison_ewc else ewc_poison_value)
        ) - ce_value
        return ce_value, ewc_clean_value, ewc_poison_value, objective_value

    return _run_loop(arch, start, d_poison, cfg, objective, components, eval_suite)


def unlearn_ga(
    start: ParamVector,
    d_poison: Dataset,
    cfg: UnlearnConfig,
    eval_suite: EvalSuite | None = None,
) -> UnlearnResult:
    """Vanilla gradient-ascent baseline: maximize cross-entropy on the poisoned set."""
    if len(d_poison) == 0:
        raise InvalidInput("poisoned subset must be non-empty")
    arch = start.arch

    def objective(params, batch):
        value, grad = ce_batch(arch, params, batch)
        return -value, Gradient(-grad.values)

    def components(params):
        ce_value = mean_ce(arch, params, d_poison)
        return ce_value, 0.0, 0.0, -ce_value

    return _run_loop(arch, start, d_poison, cfg, objective, components, eval_suite)


def _reject_poisoned(ds: Dataset) -> None:
    for s in ds:
        if s.poisoned:
            raise InvalidInput("dataset for clean training must contain no poisoned samples")


def finetune_clean(
    start: ParamVector,
    ds: Dataset,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
) -> ParamVector:
    """Continue plain descent from an existing model on a poison-free set."""
    if len(ds) == 0:
        raise InvalidInput("fine-tuning set must be non-empty")
    _reject_poisoned(ds)
    return train_ce(
        start.arch,
        start,
        ds.samples,
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=batch_size,
        seed=seed,
    )


def retrain_clean(
    arch: ModelArch,
    fresh_init_seed: int,
    ds: Dataset,
    epochs: int,
    learning_rate: float,
    batch_size: int,
) -> ParamVector:
    """Train from a fresh seeded initialization on a poison-free set.

    The reference point for what perfect trojan removal would look like.
    """
    if len(ds) == 0:
        raise InvalidInput("retraining set must be non-empty")
    _reject_poisoned(ds)
    return train_ce(
        arch,
        init_params(arch, fresh_init_seed),
        ds.samples,
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=batch_size,
        seed=fresh_init_seed,
    )


def run_descent_with_reports(
    arch: ModelArch,
    start: ParamVector,
    train_samples,
    d_poison: Dataset,
    *,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
    eval_suite: EvalSuite | None = None,
) -> UnlearnResult:
    """Plain descent on mean cross-entropy, scored like an unlearning run.

    Used for the training-style regimes (poisoned training, fine-tuning,
    retraining) so every method shares one history schema, including the
    below-50 crossing detector. There is no early stop.
    """
    state = UnlearnState(params=start, threshold_epoch=epochs)
    snapshots = [start]

    def on_epoch(epoch: int, params: ParamVector) -> None:
        p_current = poisoned_accuracy(arch, params, d_poison)
        state.threshold_epoch = detect_threshold_crossing(
            state.p_prev, p_current, epoch, state.threshold_epoch
        )
        clean_acc, attack = (
            eval_suite.evaluate(arch, params) if eval_suite else (float("nan"), float("nan"))
        )
        train_objective = mean_ce(arch, params, train_samples)
        state.history.append(
            EpochReport(
                epoch=epoch,
                clean_accuracy=clean_acc,
                asr=attack,
                poisoned_accuracy=p_current,
                loss_ce_poison=mean_ce(arch, params, d_poison.samples),
                ewc_clean=0.0,
                ewc_poison=0.0,
                total_loss=train_objective,
            )
        )
        snapshots.append(params)
        state.p_prev = p_current

    final = train_ce(
        arch,
        start,
        train_samples,
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=batch_size,
        seed=seed,
        epoch_callback=on_epoch,
    )
    threshold = min(state.threshold_epoch, len(snapshots) - 1)
    return UnlearnResult(
        final_params=final,
        threshold_params=snapshots[threshold],
        threshold_epoch=threshold,
        stop_reason=STOP_MAX_EPOCHS,
        history=tuple(state.history),
        epoch_params=tuple(snapshots),
    )
