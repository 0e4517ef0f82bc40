"""Synthetic token datasets, trigger injection and poison bookkeeping.

Generation draws each token from a class-conditional mixture over two halves
of the vocabulary, optionally keeping a reserved band of top ids out of
natural text so trigger presets can use tokens that never occur organically
(the analogue of a dead-code snippet or an implausible sentence).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput

TRIGGER_POSITIONS = ("prefix", "random")
DATASET_ROLES = ("train", "test")


@dataclass(frozen=True)
class Sample:
    """One labeled token sequence; poisoned samples remember their true label."""

    tokens: tuple[int, ...]
    label: int
    poisoned: bool = False
    original_label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if self.label not in (0, 1):
            raise InvalidInput(f"label must be 0 or 1, got {self.label!r}")
        if self.original_label is None:
            object.__setattr__(self, "original_label", self.label)
        if self.original_label not in (0, 1):
            raise InvalidInput(f"original_label must be 0 or 1, got {self.original_label!r}")
        if not self.poisoned and self.label != self.original_label:
            raise InvalidInput("unpoisoned samples must keep label == original_label")


@dataclass
class Dataset:
    """A list of samples with a train/test role tag.

    Empty datasets are representable (a clean subset of size zero is legal);
    consumers that need content raise InvalidInput themselves.
    """

    samples: list[Sample]
    role: str = "train"

    def __post_init__(self):
        if self.role not in DATASET_ROLES:
            raise InvalidInput(f"role must be one of {DATASET_ROLES}, got {self.role!r}")
        self.samples = list(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]


@dataclass(frozen=True)
class TriggerSpec:
    """A contiguous token pattern that flips source-class samples to a target label."""

    trigger_tokens: tuple[int, ...]
    position: str
    target_label: int
    source_label: int

    def __post_init__(self):
        object.__setattr__(self, "trigger_tokens", tuple(int(t) for t in self.trigger_tokens))
        if len(self.trigger_tokens) < 1:
            raise InvalidInput("trigger_tokens must contain at least one id")
        if self.position not in TRIGGER_POSITIONS:
            raise InvalidInput(f"position must be one of {TRIGGER_POSITIONS}, got {self.position!r}")
        if self.target_label not in (0, 1) or self.source_label not in (0, 1):
            raise InvalidInput("trigger labels must be 0 or 1")
        if self.target_label == self.source_label:
            raise InvalidInput("target_label must differ from source_label")


@dataclass(frozen=True)
class PoisonConfig:
    """Poisoning rate over the source class plus the selection seed."""

    rate: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.rate < 1.0:
            raise InvalidInput(f"rate must be in (0, 1), got {self.rate}")


def gen_synthetic(
    vocab_size: int,
    topic_shift: float,
    n_samples: int,
    seq_len: int,
    seed: int,
    *,
    reserved_tokens: int = 0,
    role: str = "train",
) -> Dataset:
    """Balanced two-class token dataset, deterministic under ``seed``.

    Class c draws each token from its own half of the natural vocabulary
    (ids below vocab_size - reserved_tokens) with probability
    0.5 + topic_shift/2, otherwise from the opposite half. topic_shift=0
    gives indistinguishable classes; topic_shift=1 gives disjoint support.
    """
    if reserved_tokens < 0:
        raise InvalidInput(f"reserved_tokens must be >= 0, got {reserved_tokens}")
    natural = vocab_size - reserved_tokens
    if vocab_size < 4 or natural < 4:
        raise InvalidInput(
            f"need vocab_size >= 4 with at least 4 natural ids, got "
            f"vocab_size={vocab_size}, reserved_tokens={reserved_tokens}"
        )
    if n_samples < 2 or n_samples % 2 != 0:
        raise InvalidInput(f"n_samples must be even and >= 2, got {n_samples}")
    if seq_len < 1:
        raise InvalidInput(f"seq_len must be >= 1, got {seq_len}")
    if not 0.0 <= topic_shift <= 1.0:
        raise InvalidInput(f"topic_shift must be in [0, 1], got {topic_shift}")

    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.repeat([0, 1], n_samples // 2))

    half = natural // 2
    own = rng.random((n_samples, seq_len)) < 0.5 + topic_shift / 2.0
    own_start = np.where(labels == 0, 0, half)[:, None]
    own_stop = np.where(labels == 0, half, natural)[:, None]
    other_start = np.where(labels == 0, half, 0)[:, None]
    other_stop = np.where(labels == 0, natural, half)[:, None]
    start = np.where(own, own_start, other_start)
    stop = np.where(own, own_stop, other_stop)
    tokens = rng.integers(start, stop)

    samples = [
        Sample(tokens=tuple(int(t) for t in row), label=int(lab))
        for row, lab in zip(tokens, labels)
    ]
    return Dataset(samples, role=role)


def _insert_offset(trig: TriggerSpec, n_tokens: int, rng: np.random.Generator) -> int:
    if trig.position == "prefix":
        return 0
    return int(rng.integers(0, n_tokens + 1))


def inject_trigger(sample: Sample, trig: TriggerSpec, rng: np.random.Generator) -> Sample:
    """Insert the trigger contiguously and flip the label to the trigger target."""
    offset = _insert_offset(trig, len(sample.tokens), rng)
    tokens = sample.tokens[:offset] + trig.trigger_tokens + sample.tokens[offset:]
    return Sample(
        tokens=tokens,
        label=trig.target_label,
        poisoned=True,
        original_label=sample.original_label,
    )


def poison_dataset(
    ds: Dataset, trig: TriggerSpec, cfg: PoisonConfig
) -> tuple[Dataset, tuple[int, ...]]:
    """Poison round-half-up(rate * source-class count) samples, chosen without replacement.

    Returns the new dataset plus the sorted indices of the poisoned samples;
    all other samples are carried over untouched.
    """
    source_idx = [i for i, s in enumerate(ds) if s.label == trig.source_label]
    if len(source_idx) * cfg.rate < 1.0:
        raise InvalidInput(
            f"need at least {math.ceil(1.0 / cfg.rate)} samples of source class "
            f"{trig.source_label}, found {len(source_idx)}"
        )
    count = int(math.floor(cfg.rate * len(source_idx) + 0.5))
    rng = np.random.default_rng(cfg.seed)
    chosen = sorted(int(i) for i in rng.choice(source_idx, size=count, replace=False))

    samples = list(ds.samples)
    for i in chosen:
        samples[i] = inject_trigger(samples[i], trig, rng)
    return Dataset(samples, role=ds.role), tuple(chosen)


def choose_clean_indices(ds: Dataset, k: int, seed: int) -> tuple[int, ...]:
    """Indices of k unpoisoned samples, uniform without replacement under ``seed``."""
    if k < 0:
        raise InvalidInput(f"subset size must be >= 0, got {k}")
    clean_idx = [i for i, s in enumerate(ds) if not s.poisoned]
    if k > len(clean_idx):
        raise InvalidInput(f"requested {k} clean samples but only {len(clean_idx)} exist")
    rng = np.random.default_rng(seed)
    return tuple(sorted(int(i) for i in rng.choice(clean_idx, size=k, replace=False)))


def split_clean_subset(ds: Dataset, k: int, seed: int) -> Dataset:
    """A size-k subset of the unpoisoned samples (the companion of the poisoned subset)."""
    return Dataset([ds[i] for i in choose_clean_indices(ds, k, seed)], role=ds.role)


def make_asr_eval_set(
    test_ds: Dataset, trig: TriggerSpec, rng: np.random.Generator | None = None
) -> Dataset:
    """Triggered copies of every test sample not already of the target class.

    Labels are left at their true values: this set exists purely to measure
    how often the trigger drags predictions to the target class. ``rng``
    drives random-offset insertion; omit it for a fixed default stream.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    eligible = [s for s in test_ds if s.label != trig.target_label]
    if not eligible:
        raise InvalidInput("no test samples outside the target class to trigger")
    triggered = []
    for s in eligible:
        offset = _insert_offset(trig, len(s.tokens), rng)
        tokens = s.tokens[:offset] + trig.trigger_tokens + s.tokens[offset:]
        triggered.append(
            Sample(tokens=tokens, label=s.label, poisoned=False, original_label=s.original_label)
        )
    return Dataset(triggered, role="test")


def write_jsonl(path: str | Path, ds: Dataset) -> None:
    """One JSON object per sample: tokens, label, poisoned, original_label."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds:
            fh.write(
                json.dumps(
                    {
                        "tokens": list(s.tokens),
                        "label": s.label,
                        "poisoned": s.poisoned,
                        "original_label": s.original_label,
                    }
                )
            )
            fh.write("\n")


def read_jsonl(path: str | Path, role: str = "train") -> Dataset:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            samples.append(
                Sample(
                    tokens=tuple(rec["tokens"]),
                    label=rec["label"],
                    poisoned=rec["poisoned"],
                    original_label=rec["original_label"],
                )
            )
    return Dataset(samples, role=role)
