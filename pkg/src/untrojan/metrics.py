"""Evaluation metrics and per-epoch report rows.

Argmax ties resolve to class 0 (the all-zero model therefore predicts 0
everywhere). Metrics always evaluate the full set they are given; trimming or
sampling is the caller's business.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import InvalidInput
from .model import ModelArch, ParamVector, forward


def predict_label(arch: ModelArch, params: ParamVector, tokens) -> int:
    """Argmax class for one sequence, ties toward the lower index."""
    return int(np.argmax(forward(arch, params, tokens)))


def accuracy(arch: ModelArch, params: ParamVector, ds: Dataset) -> float:
    """Percentage of samples whose predicted class equals the stored label."""
    if len(ds) == 0:
        raise InvalidInput("accuracy of an empty dataset is undefined")
    hits = sum(predict_label(arch, params, s.tokens) == s.label for s in ds)
    return 100.0 * hits / len(ds)


def asr(arch: ModelArch, params: ParamVector, triggered_set: Dataset, target_label: int) -> float:
    """Percentage of triggered inputs classified as the attack target."""
    if len(triggered_set) == 0:
        raise InvalidInput("attack success rate of an empty set is undefined")
    if target_label not in (0, 1):
        raise InvalidInput(f"target_label must be 0 or 1, got {target_label!r}")
    hits = sum(predict_label(arch, params, s.tokens) == target_label for s in triggered_set)
    return 100.0 * hits / len(triggered_set)


def poisoned_accuracy(arch: ModelArch, params: ParamVector, d_poison: Dataset) -> float:
    """Percentage of poisoned samples classified as their trojan target label."""
    if len(d_poison) == 0:
        raise InvalidInput("poisoned accuracy of an empty set is undefined")
    for s in d_poison:
        if not s.poisoned:
            raise InvalidInput("poisoned accuracy is only defined over poisoned samples")
    hits = sum(predict_label(arch, params, s.tokens) == s.label for s in d_poison)
    return 100.0 * hits / len(d_poison)


@dataclass(frozen=True)
class EpochReport:
    """Metrics and loss components for one epoch of a run.

    clean_accuracy and asr are NaN when the run had no evaluation sets
    attached; the loss fields describe the objective the run optimizes
    (for plain-descent runs the anchoring terms are zero).
    """

    epoch: int
    clean_accuracy: float
    asr: float
    poisoned_accuracy: float
    loss_ce_poison: float
    ewc_clean: float
    ewc_poison: float
    total_loss: float

    def __post_init__(self):
        if self.epoch < 0:
            raise InvalidInput(f"epoch must be >= 0, got {self.epoch}")
        for name in ("clean_accuracy", "asr", "poisoned_accuracy"):
            value = getattr(self, name)
            if not math.isnan(value) and not 0.0 <= value <= 100.0:
                raise InvalidInput(f"{name} must lie in [0, 100], got {value}")
        for name in ("ewc_clean", "ewc_poison"):
            value = getattr(self, name)
            if not math.isnan(value) and value < 0.0:
                raise InvalidInput(f"{name} must be >= 0, got {value}")


REPORT_FIELDS = [f.name for f in fields(EpochReport)]


@dataclass(frozen=True)
class EvalSuite:
    """Held-out sets used to score a model after each epoch."""

    test_set: Dataset | None
    triggered_set: Dataset | None
    target_label: int

    def evaluate(self, arch: ModelArch, params: ParamVector) -> tuple[float, float]:
        """(clean accuracy, attack success rate); NaN where the set is missing."""
        clean = accuracy(arch, params, self.test_set) if self.test_set else float("nan")
        attack = (
            asr(arch, params, self.triggered_set, self.target_label)
            if self.triggered_set
            else float("nan")
        )
        return clean, attack


def _format_cell(value) -> str:
    return str(value) if isinstance(value, int) else repr(float(value))


def write_history_csv(path: str | Path, reports) -> None:
    """Floats use repr (shortest round-trip), keeping reruns byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for rep in reports:
            writer.writerow([_format_cell(getattr(rep, name)) for name in REPORT_FIELDS])


def read_history_csv(path: str | Path) -> list[EpochReport]:
    reports = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            reports.append(
                EpochReport(
                    epoch=int(row["epoch"]),
                    **{name: float(row[name]) for name in REPORT_FIELDS if name != "epoch"},
                )
            )
    return reports


def write_history_jsonl(path: str | Path, reports) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(json.dumps({name: getattr(rep, name) for name in REPORT_FIELDS}))
            fh.write("\n")
