"""Run configuration: presets, INI-style config files and seed derivation.

A run is described by one flat key=value file with sections; CLI flags
override file values, file values override the chosen preset. Per-cell seeds
mix the master seed with the cell coordinates through SHA-256, so adding
sweep cells never perturbs existing ones.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import TriggerSpec
from .errors import InvalidInput

METHODS = ("retrain", "finetune", "ga", "lya")
FINETUNE_VARIANTS = ("removed", "relabeled")

PRESETS = {
    # Multi-token prefix trigger on the negative class, 5% of its samples.
    "sentiment-style": {
        "data": {
            "vocab_size": "200",
            "n_train": "1000",
            "n_test": "200",
            "seq_len": "24",
            "topic_shift": "0.5",
            "reserved_tokens": "8",
        },
        "model": {"embed_dim": "16"},
        "trigger": {
            "tokens": "196 197 198 199",
            "position": "prefix",
            "source_label": "0",
            "target_label": "1",
        },
        "poison": {"rate": "0.05"},
        "train": {"epochs": "30", "learning_rate": "0.5", "batch_size": "32"},
        "unlearn": {
            "learning_rate": "0.1",
            "max_epochs": "30",
            "p_thresh": "0",
            "exclude_poison_ewc": "false",
            "batch_sizes": "32",
            "lambdas": "1e2 1e3 1e4",
            "finetune_variant": "removed",
        },
    },
    # Dead-token span at a random offset in 2% of the insecure class.
    "defect-style": {
        "data": {
            "vocab_size": "200",
            "n_train": "1000",
            "n_test": "200",
            "seq_len": "32",
            "topic_shift": "0.5",
            "reserved_tokens": "8",
        },
        "model": {"embed_dim": "16"},
        "trigger": {
            "tokens": "192 193 194",
            "position": "random",
            "source_label": "1",
            "target_label": "0",
        },
        "poison": {"rate": "0.02"},
        "train": {"epochs": "30", "learning_rate": "0.5", "batch_size": "32"},
        "unlearn": {
            "learning_rate": "0.1",
            "max_epochs": "30",
            "p_thresh": "0",
            "exclude_poison_ewc": "true",
            "batch_sizes": "32",
            "lambdas": "1e2 1e3 1e4",
            "finetune_variant": "removed",
        },
    },
}


class ConfigError(Exception):
    """Configuration or usage problem; maps to exit code 1."""


@dataclass
class RunConfig:
    """Fully resolved configuration for one experiment."""

    preset: str = "sentiment-style"
    seed: int = 0
    out_dir: Path = Path("out")
    method: str = "lya"
    jobs: int = 1
    repeats: int = 1
    # data
    vocab_size: int = 200
    n_train: int = 1000
    n_test: int = 200
    seq_len: int = 24
    topic_shift: float = 0.5
    reserved_tokens: int = 8
    # model
    embed_dim: int = 16
    # trigger
    trigger_tokens: tuple[int, ...] = (196, 197, 198, 199)
    trigger_position: str = "prefix"
    source_label: int = 0
    target_label: int = 1
    # poison
    poison_rate: float = 0.05
    # poisoned training
    train_epochs: int = 30
    train_learning_rate: float = 0.5
    train_batch_size: int = 32
    # unlearning sweep
    unlearn_learning_rate: float = 0.1
    max_epochs: int = 30
    p_thresh: float = 0.0
    exclude_poison_ewc: bool = False
    batch_sizes: tuple[int, ...] = (32,)
    lambdas: tuple[float, ...] = (1e2, 1e3, 1e4)
    finetune_variant: str = "removed"

    def trigger_spec(self) -> TriggerSpec:
        return TriggerSpec(
            trigger_tokens=self.trigger_tokens,
            position=self.trigger_position,
            target_label=self.target_label,
            source_label=self.source_label,
        )

    def validate(self) -> None:
        def bad(section, key, message):
            raise ConfigError(f"[{section}] {key}: {message}")

        if self.preset not in PRESETS:
            bad("run", "preset", f"unknown preset {self.preset!r}, choose from {sorted(PRESETS)}")
        if self.method not in METHODS:
            bad("run", "method", f"unknown method {self.method!r}, choose from {METHODS}")
        if self.jobs < 1:
            bad("run", "jobs", "must be >= 1")
        if self.repeats < 1:
            bad("run", "repeats", "must be >= 1")
        if self.n_train < 2 or self.n_train % 2:
            bad("data", "n_train", "must be even and >= 2")
        if self.n_test < 2 or self.n_test % 2:
            bad("data", "n_test", "must be even and >= 2")
        if self.vocab_size - self.reserved_tokens < 4:
            bad("data", "vocab_size", "must leave at least 4 natural token ids")
        if not 0.0 <= self.topic_shift <= 1.0:
            bad("data", "topic_shift", "must lie in [0, 1]")
        if self.embed_dim < 1:
            bad("model", "embed_dim", "must be >= 1")
        if not self.trigger_tokens:
            bad("trigger", "tokens", "must list at least one token id")
        if any(t < 0 or t >= self.vocab_size for t in self.trigger_tokens):
            bad("trigger", "tokens", f"ids must lie in [0, {self.vocab_size})")
        if self.trigger_position not in ("prefix", "random"):
            bad("trigger", "position", "must be 'prefix' or 'random'")
        if self.source_label not in (0, 1) or self.target_label not in (0, 1):
            bad("trigger", "source_label/target_label", "must be 0 or 1")
        if self.source_label == self.target_label:
            bad("trigger", "target_label", "must differ from source_label")
        if self.seq_len < len(self.trigger_tokens) + 1:
            bad("data", "seq_len", "must exceed the trigger length")
        if not 0.0 < self.poison_rate < 1.0:
            bad("poison", "rate", "must lie in (0, 1)")
        if self.train_epochs < 0:
            bad("train", "epochs", "must be >= 0")
        if self.train_learning_rate < 0 or self.unlearn_learning_rate < 0:
            bad("train/unlearn", "learning_rate", "must be >= 0")
        if self.train_batch_size < 1:
            bad("train", "batch_size", "must be >= 1")
        if self.max_epochs < 1:
            bad("unlearn", "max_epochs", "must be >= 1")
        if not 0.0 <= self.p_thresh <= 100.0:
            bad("unlearn", "p_thresh", "must lie in [0, 100]")
        if not self.batch_sizes or any(b < 1 for b in self.batch_sizes):
            bad("unlearn", "batch_sizes", "must list batch sizes >= 1")
        if self.lambdas is not None and any(l < 0 for l in self.lambdas):
            bad("unlearn", "lambdas", "must list values >= 0")
        if self.finetune_variant not in FINETUNE_VARIANTS:
            bad("unlearn", "finetune_variant", f"must be one of {FINETUNE_VARIANTS}")

    def as_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, tuple):
                value = list(value)
            doc[f.name] = value
        return doc


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.replace(",", " ").split())


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(part) for part in raw.replace(",", " ").split())


def _parse_bool(raw: str, where: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Resolve preset defaults <- config file <- CLI overrides into a RunConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text_preset = "sentiment-style"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as err:
            raise ConfigError(f"cannot parse {path}: {err}") from err
        text_preset = parser.get("run", "preset", fallback=text_preset)

    overrides = overrides or {}
    preset_name = overrides.get("preset", text_preset)
    if preset_name not in PRESETS:
        raise ConfigError(f"[run] preset: unknown preset {preset_name!r}, choose from {sorted(PRESETS)}")

    merged = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    merged.read_dict(PRESETS[preset_name])
    merged.read_dict({s: dict(parser[s]) for s in parser.sections()})

    def get(section, key, convert, default=None):
        if not merged.has_option(section, key):
            return default
        raw = merged.get(section, key)
        try:
            return convert(raw)
        except (ValueError, InvalidInput) as err:
            raise ConfigError(f"[{section}] {key}: {err}") from err

    cfg = RunConfig(
        preset=preset_name,
        seed=int(overrides.get("seed", get("run", "seed", int, 0))),
        out_dir=Path(overrides.get("out", get("run", "out", str, "out"))),
        method=str(overrides.get("method", get("run", "method", str, "lya"))),
        jobs=int(overrides.get("jobs", get("run", "jobs", int, 1))),
        repeats=int(overrides.get("repeats", get("run", "repeats", int, 1))),
        vocab_size=get("data", "vocab_size", int),
        n_train=get("data", "n_train", int),
        n_test=get("data", "n_test", int),
        seq_len=get("data", "seq_len", int),
        topic_shift=get("data", "topic_shift", float),
        reserved_tokens=get("data", "reserved_tokens", int),
        embed_dim=get("model", "embed_dim", int),
        trigger_tokens=get("trigger", "tokens", _parse_int_list),
        trigger_position=get("trigger", "position", str),
        source_label=get("trigger", "source_label", int),
        target_label=get("trigger", "target_label", int),
        poison_rate=get("poison", "rate", float),
        train_epochs=get("train", "epochs", int),
        train_learning_rate=get("train", "learning_rate", float),
        train_batch_size=get("train", "batch_size", int),
        unlearn_learning_rate=get("unlearn", "learning_rate", float),
        max_epochs=get("unlearn", "max_epochs", int),
        p_thresh=get("unlearn", "p_thresh", float),
        exclude_poison_ewc=get(
            "unlearn", "exclude_poison_ewc", lambda raw: _parse_bool(raw, "[unlearn] exclude_poison_ewc")
        ),
        batch_sizes=get("unlearn", "batch_sizes", _parse_int_list),
        lambdas=get("unlearn", "lambdas", _parse_float_list),
        finetune_variant=get("unlearn", "finetune_variant", str),
    )
    cfg.validate()
    return cfg


def mix_seed(master_seed: int, *parts) -> int:
    """Deterministic 63-bit seed from the master seed and arbitrary name parts."""
    tag = "|".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def cell_seed(master_seed: int, method: str, batch_size: int, lam: float | None, repeat: int) -> int:
    """Seed for one sweep cell, stable under additions of other cells."""
    lam_key = "none" if lam is None else repr(float(lam))
    return mix_seed(master_seed, "cell", method, f"batch={batch_size}", f"lam={lam_key}", f"rep={repeat}")
