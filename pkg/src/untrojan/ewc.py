"""Per-parameter importance weights and the quadratic anchoring penalty.

Importance is the empirical Fisher diagonal: the mean over samples of the
squared per-sample loss gradient, estimated once at an anchor point and held
fixed. The squared-gradient form is always non-negative, which the penalty
requires; ``estimator`` is a switch so a Hessian-diagonal variant could be
slotted in later.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .model import Gradient, ModelArch, ParamVector, grad_ce

FISHER_SOURCES = ("clean", "poison")
FISHER_ESTIMATORS = ("empirical",)


@dataclass(frozen=True, eq=False)
class FisherDiag:
    """Non-negative per-parameter importance, tagged with the data it came from."""

    values: np.ndarray
    source: str
    anchor: ParamVector | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise InvalidInput(f"importance must be one-dimensional, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or values.min(initial=0.0) < 0.0:
            raise InvalidInput("importance entries must be finite and >= 0")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.source not in FISHER_SOURCES:
            raise InvalidInput(f"source must be one of {FISHER_SOURCES}, got {self.source!r}")

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def zeros(cls, arch: ModelArch, source: str = "clean", anchor: ParamVector | None = None):
        """All-zero importance; the penalty built on it contributes nothing."""
        return cls(np.zeros(arch.parameter_count), source, anchor)


def estimate_fisher(
    arch: ModelArch,
    anchor: ParamVector,
    ds,
    *,
    source: str = "clean",
    estimator: str = "empirical",
) -> FisherDiag:
    """Mean squared per-sample gradient of the loss at ``anchor`` over ``ds``."""
    if estimator not in FISHER_ESTIMATORS:
        raise InvalidInput(f"estimator must be one of {FISHER_ESTIMATORS}, got {estimator!r}")
    if len(ds) == 0:
        raise InvalidInput("cannot estimate importance from an empty dataset")
    acc = np.zeros(arch.parameter_count)
    for sample in ds:
        acc += grad_ce(arch, anchor, sample.tokens, sample.label).values ** 2
    return FisherDiag(acc / len(ds), source, anchor)


def _check_lengths(fisher: FisherDiag, anchor: ParamVector, current: ParamVector) -> None:
    if not (len(fisher) == len(anchor) == len(current)):
        raise InvalidInput(
            f"length mismatch: importance {len(fisher)}, anchor {len(anchor)}, "
            f"current {len(current)}"
        )


def ewc_penalty(fisher: FisherDiag, anchor: ParamVector, current: ParamVector) -> float:
    """Importance-weighted squared displacement from the anchor; 0 iff current == anchor on supported coords."""
    _check_lengths(fisher, anchor, current)
    diff = current.values - anchor.values
    return float(np.dot(fisher.values, diff * diff))


def ewc_grad(fisher: FisherDiag, anchor: ParamVector, current: ParamVector) -> Gradient:
    """Gradient of ewc_penalty w.r.t. the current parameters: 2 * F * (current - anchor)."""
    _check_lengths(fisher, anchor, current)
    return Gradient(2.0 * fisher.values * (current.values - anchor.values))
