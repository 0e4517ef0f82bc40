"""Experiment orchestration behind the CLI: artifact layout, sweeps, reports.

Everything under the output directory is reachable from a manifest: data
files from data/manifest.json, each sweep cell from its own manifest.json,
cells from the per-method sweep manifest, and sweep manifests from
report_index.json. The report never scans directories.
"""

from __future__ import annotations

import json
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ConfigError, RunConfig, cell_seed, mix_seed
from .data import (
    Dataset,
    PoisonConfig,
    Sample,
    gen_synthetic,
    make_asr_eval_set,
    poison_dataset,
    read_jsonl,
    split_clean_subset,
    write_jsonl,
)
from .errors import NumericalError
from .metrics import (
    EvalSuite,
    accuracy,
    asr,
    poisoned_accuracy,
    write_history_csv,
    write_history_jsonl,
)
from .model import ModelArch, ParamVector, init_params
from .unlearn import (
    UnlearnConfig,
    UnlearnResult,
    run_descent_with_reports,
    unlearn_ga,
    unlearn_lya,
)

DATA_FILES = {
    "train": "train.jsonl",
    "test": "test.jsonl",
    "poisoned_train": "poisoned_train.jsonl",
    "d_poison": "d_poison.jsonl",
    "d_clean": "d_clean.jsonl",
    "triggered_eval": "triggered_eval.jsonl",
}
POISONED_MODEL = "poisoned_model.json"
REPORT_INDEX = "report_index.json"

SUMMARY_COLUMNS = [
    "method",
    "lambda",
    "batch_size",
    "repeat",
    "status",
    "stop_reason",
    "last_epoch",
    "last_accuracy",
    "last_asr",
    "threshold_epoch",
    "threshold_accuracy",
    "threshold_asr",
]


class MissingArtifact(ConfigError):
    """A required input file does not exist yet."""


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _arch(cfg: RunConfig) -> ModelArch:
    return ModelArch(vocab_size=cfg.vocab_size, embed_dim=cfg.embed_dim)


def generate_datasets(cfg: RunConfig) -> dict:
    """Build and persist all dataset artifacts; returns the data manifest.

    Files are staged in a temporary sibling directory and moved into place
    only when every one of them has been written, so a failing run leaves no
    partial data directory behind.
    """
    trig = cfg.trigger_spec()
    train = gen_synthetic(
        cfg.vocab_size,
        cfg.topic_shift,
        cfg.n_train,
        cfg.seq_len,
        mix_seed(cfg.seed, "data", "train"),
        reserved_tokens=cfg.reserved_tokens,
        role="train",
    )
    test = gen_synthetic(
        cfg.vocab_size,
        cfg.topic_shift,
        cfg.n_test,
        cfg.seq_len,
        mix_seed(cfg.seed, "data", "test"),
        reserved_tokens=cfg.reserved_tokens,
        role="test",
    )
    poisoned_train, poison_idx = poison_dataset(
        train, trig, PoisonConfig(rate=cfg.poison_rate, seed=mix_seed(cfg.seed, "data", "poison"))
    )
    d_poison = Dataset([poisoned_train[i] for i in poison_idx], role="train")
    d_clean = split_clean_subset(poisoned_train, len(d_poison), mix_seed(cfg.seed, "data", "clean"))
    triggered = make_asr_eval_set(
        test, trig, rng=np.random.default_rng(mix_seed(cfg.seed, "data", "asr"))
    )

    datasets = {
        "train": train,
        "test": test,
        "poisoned_train": poisoned_train,
        "d_poison": d_poison,
        "d_clean": d_clean,
        "triggered_eval": triggered,
    }
    data_dir = Path(cfg.out_dir) / "data"
    data_dir.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "preset": cfg.preset,
        "seed": cfg.seed,
        "counts": {name: len(ds) for name, ds in datasets.items()},
        "poison_indices": list(poison_idx),
        "trigger": {
            "tokens": list(trig.trigger_tokens),
            "position": trig.position,
            "source_label": trig.source_label,
            "target_label": trig.target_label,
        },
        "files": {name: str(data_dir / fname) for name, fname in DATA_FILES.items()},
        "config": cfg.as_dict(),
    }

    staging = Path(tempfile.mkdtemp(prefix=".data-", dir=data_dir.parent))
    try:
        for name, fname in DATA_FILES.items():
            write_jsonl(staging / fname, datasets[name])
        _write_json(staging / "manifest.json", manifest)
        if data_dir.exists():
            shutil.rmtree(data_dir)
        staging.replace(data_dir)
    finally:
        if staging.exists():
            shutil.rmtree(staging)
    return manifest


def load_datasets(cfg: RunConfig) -> dict:
    data_dir = Path(cfg.out_dir) / "data"
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.is_file():
        raise MissingArtifact(f"missing dataset manifest {manifest_path}; run 'generate' first")
    roles = {"test": "test", "triggered_eval": "test"}
    loaded = {}
    for name, fname in DATA_FILES.items():
        path = data_dir / fname
        if not path.is_file():
            raise MissingArtifact(f"missing dataset file {path}; run 'generate' first")
        loaded[name] = read_jsonl(path, role=roles.get(name, "train"))
    loaded["manifest"] = json.loads(manifest_path.read_text(encoding="utf-8"))
    return loaded


def _eval_suite(cfg: RunConfig, datasets: dict) -> EvalSuite:
    return EvalSuite(
        test_set=datasets["test"],
        triggered_set=datasets["triggered_eval"],
        target_label=cfg.target_label,
    )


def train_poisoned(cfg: RunConfig) -> dict:
    """Fit the classifier on the poisoned training set and checkpoint it."""
    datasets = load_datasets(cfg)
    arch = _arch(cfg)
    start = init_params(arch, mix_seed(cfg.seed, "train", "init"))
    began = time.perf_counter()
    result = run_descent_with_reports(
        arch,
        start,
        datasets["poisoned_train"].samples,
        datasets["d_poison"],
        epochs=cfg.train_epochs,
        learning_rate=cfg.train_learning_rate,
        batch_size=cfg.train_batch_size,
        seed=mix_seed(cfg.seed, "train", "shuffle"),
        eval_suite=_eval_suite(cfg, datasets),
    )
    models_dir = Path(cfg.out_dir) / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    checkpoint.save_params(models_dir / POISONED_MODEL, result.final_params)
    write_history_csv(models_dir / "train_history.csv", result.history)
    write_history_jsonl(models_dir / "train_history.jsonl", result.history)
    last = result.history[-1] if result.history else None
    manifest = {
        "checkpoint": str(models_dir / POISONED_MODEL),
        "history_csv": str(models_dir / "train_history.csv"),
        "history_jsonl": str(models_dir / "train_history.jsonl"),
        "epochs": cfg.train_epochs,
        "final_clean_accuracy": last.clean_accuracy if last else float("nan"),
        "final_asr": last.asr if last else float("nan"),
        "duration_s": time.perf_counter() - began,
        "config": cfg.as_dict(),
    }
    _write_json(models_dir / "train_manifest.json", manifest)
    return manifest


def load_poisoned_model(cfg: RunConfig) -> ParamVector:
    path = Path(cfg.out_dir) / "models" / POISONED_MODEL
    if not path.is_file():
        raise MissingArtifact(f"missing poisoned checkpoint {path}; run 'train' first")
    return checkpoint.load_params(path)


def _clean_training_set(cfg: RunConfig, datasets: dict) -> Dataset:
    """The poison-free training set used by the finetune and retrain regimes."""
    full = datasets["poisoned_train"]
    if cfg.finetune_variant == "relabeled":
        relabeled = [
            s if not s.poisoned
            else Sample(tokens=s.tokens, label=s.original_label, poisoned=False,
                        original_label=s.original_label)
            for s in full
        ]
        return Dataset(relabeled, role="train")
    return Dataset([s for s in full if not s.poisoned], role="train")


@dataclass(frozen=True)
class SweepCell:
    method: str
    batch_size: int
    lam: float | None
    repeat: int
    seed: int

    @property
    def name(self) -> str:
        parts = [f"b{self.batch_size}"]
        if self.lam is not None:
            parts.append(f"lam{self.lam:g}")
        if self.repeat:
            parts.append(f"rep{self.repeat}")
        return "_".join(parts)


def sweep_cells(cfg: RunConfig) -> list[SweepCell]:
    lams: tuple[float | None, ...] = tuple(cfg.lambdas) if cfg.method == "lya" else (None,)
    return [
        SweepCell(
            method=cfg.method,
            batch_size=batch,
            lam=lam,
            repeat=rep,
            seed=cell_seed(cfg.seed, cfg.method, batch, lam, rep),
        )
        for batch in cfg.batch_sizes
        for lam in lams
        for rep in range(cfg.repeats)
    ]


def _run_cell(cfg: RunConfig, cell: SweepCell, start: ParamVector | None, datasets: dict) -> UnlearnResult:
    arch = _arch(cfg)
    suite = _eval_suite(cfg, datasets)
    if cell.method in ("ga", "lya"):
        ucfg = UnlearnConfig(
            lam=cell.lam if cell.lam is not None else 0.0,
            learning_rate=cfg.unlearn_learning_rate,
            batch_size=cell.batch_size,
            max_epochs=cfg.max_epochs,
            p_thresh=cfg.p_thresh,
            seed=cell.seed,
            exclude_poison_ewc=cfg.exclude_poison_ewc,
        )
        if cell.method == "ga":
            return unlearn_ga(start, datasets["d_poison"], ucfg, suite)
        return unlearn_lya(
            start, datasets["poisoned_train"], datasets["d_poison"], datasets["d_clean"], ucfg, suite
        )
    clean_set = _clean_training_set(cfg, datasets)
    if cell.method == "finetune":
        begin = start
    else:
        begin = init_params(arch, cell.seed)
    return run_descent_with_reports(
        arch,
        begin,
        clean_set.samples,
        datasets["d_poison"],
        epochs=cfg.max_epochs,
        learning_rate=cfg.train_learning_rate,
        batch_size=cell.batch_size,
        seed=cell.seed,
        eval_suite=suite,
    )


def _execute_cell(cfg: RunConfig, cell: SweepCell, start: ParamVector | None, datasets: dict) -> dict:
    cell_dir = Path(cfg.out_dir) / "runs" / cfg.method / cell.name
    cell_dir.mkdir(parents=True, exist_ok=True)
    began = time.perf_counter()
    manifest = {
        "method": cell.method,
        "batch_size": cell.batch_size,
        "lambda": cell.lam,
        "repeat": cell.repeat,
        "seed": cell.seed,
        "status": "ok",
        "error": None,
    }
    try:
        result = _run_cell(cfg, cell, start, datasets)
    except NumericalError as err:
        manifest["status"] = "failed"
        manifest["error"] = str(err)
        result = err.partial_result
    if result is not None:
        write_history_csv(cell_dir / "history.csv", result.history)
        write_history_jsonl(cell_dir / "history.jsonl", result.history)
        checkpoint.save_params(cell_dir / "final_model.json", result.final_params)
        checkpoint.save_params(cell_dir / "threshold_model.json", result.threshold_params)
        manifest.update(
            {
                "stop_reason": result.stop_reason,
                "threshold_epoch": result.threshold_epoch,
                "epochs_run": result.epochs_run,
                "artifacts": {
                    "history_csv": str(cell_dir / "history.csv"),
                    "history_jsonl": str(cell_dir / "history.jsonl"),
                    "final_checkpoint": str(cell_dir / "final_model.json"),
                    "threshold_checkpoint": str(cell_dir / "threshold_model.json"),
                },
            }
        )
    manifest["duration_s"] = time.perf_counter() - began
    _write_json(cell_dir / "manifest.json", manifest)
    return {"cell": cell.name, "path": str(cell_dir / "manifest.json"), "status": manifest["status"]}


def run_sweep(cfg: RunConfig, order: list[int] | None = None) -> dict:
    """Run every sweep cell for the configured method; cells never share state.

    ``order`` permutes execution (used to demonstrate cell isolation);
    outputs are independent of both order and the number of workers.
    """
    datasets = load_datasets(cfg)
    start = load_poisoned_model(cfg) if cfg.method in ("ga", "lya", "finetune") else None
    cells = sweep_cells(cfg)
    indices = list(range(len(cells))) if order is None else list(order)
    entries: dict[int, dict] = {}
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {i: pool.submit(_execute_cell, cfg, cells[i], start, datasets) for i in indices}
            entries = {i: fut.result() for i, fut in futures.items()}
    else:
        for i in indices:
            entries[i] = _execute_cell(cfg, cells[i], start, datasets)

    ordered = [entries[i] for i in range(len(cells))]
    sweep_manifest = {
        "method": cfg.method,
        "master_seed": cfg.seed,
        "cells": ordered,
        "config": cfg.as_dict(),
    }
    sweep_path = Path(cfg.out_dir) / f"sweep_{cfg.method}.json"
    _write_json(sweep_path, sweep_manifest)
    _update_report_index(cfg.out_dir, sweep_path)
    failed = sum(1 for e in ordered if e["status"] == "failed")
    if ordered and failed == len(ordered):
        raise NumericalError(f"all {failed} sweep cells failed", partial_result=sweep_manifest)
    return sweep_manifest


def _update_report_index(out_dir: Path, sweep_path: Path) -> None:
    index_path = Path(out_dir) / REPORT_INDEX
    index = {"sweeps": []}
    if index_path.is_file():
        index = json.loads(index_path.read_text(encoding="utf-8"))
    entry = str(sweep_path)
    if entry not in index["sweeps"]:
        index["sweeps"].append(entry)
    index["sweeps"] = sorted(index["sweeps"])
    _write_json(index_path, index)


def evaluate_checkpoint(cfg: RunConfig, checkpoint_path: str | Path) -> dict:
    """Clean accuracy, attack success rate and trojan-label accuracy for one checkpoint."""
    path = Path(checkpoint_path)
    if not path.is_file():
        raise MissingArtifact(f"missing checkpoint {path}")
    params = checkpoint.load_params(path)
    datasets = load_datasets(cfg)
    arch = params.arch
    return {
        "checkpoint": str(path),
        "clean_accuracy": accuracy(arch, params, datasets["test"]),
        "asr": asr(arch, params, datasets["triggered_eval"], cfg.target_label),
        "poisoned_accuracy": poisoned_accuracy(arch, params, datasets["d_poison"]),
    }


def _summary_row(cell_manifest: dict) -> dict:
    from .metrics import read_history_csv

    row = {
        "method": cell_manifest["method"],
        "lambda": cell_manifest["lambda"],
        "batch_size": cell_manifest["batch_size"],
        "repeat": cell_manifest["repeat"],
        "status": cell_manifest["status"],
        "stop_reason": cell_manifest.get("stop_reason"),
        "last_epoch": None,
        "last_accuracy": None,
        "last_asr": None,
        "threshold_epoch": cell_manifest.get("threshold_epoch"),
        "threshold_accuracy": None,
        "threshold_asr": None,
    }
    artifacts = cell_manifest.get("artifacts")
    if not artifacts:
        return row
    history = read_history_csv(artifacts["history_csv"])
    if not history:
        return row
    last = history[-1]
    row["last_epoch"] = last.epoch
    row["last_accuracy"] = last.clean_accuracy
    row["last_asr"] = last.asr
    threshold_epoch = cell_manifest.get("threshold_epoch")
    if threshold_epoch and threshold_epoch >= 1:
        at = history[threshold_epoch - 1]
        row["threshold_accuracy"] = at.clean_accuracy
        row["threshold_asr"] = at.asr
    return row


def build_report(out_dir: Path, sweep_paths: list[Path] | None = None) -> list[dict]:
    """Aggregate sweep manifests into summary rows (and summary.csv under out_dir)."""
    out_dir = Path(out_dir)
    if sweep_paths is None:
        index_path = out_dir / REPORT_INDEX
        if not index_path.is_file():
            raise MissingArtifact(f"missing report index {index_path}; run 'unlearn' first")
        sweep_paths = [Path(p) for p in json.loads(index_path.read_text(encoding="utf-8"))["sweeps"]]
    rows = []
    for sweep_path in sweep_paths:
        if not Path(sweep_path).is_file():
            raise MissingArtifact(f"missing sweep manifest {sweep_path}")
        sweep = json.loads(Path(sweep_path).read_text(encoding="utf-8"))
        for entry in sweep["cells"]:
            cell_manifest = json.loads(Path(entry["path"]).read_text(encoding="utf-8"))
            rows.append(_summary_row(cell_manifest))

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join("" if row[c] is None else str(row[c]) for c in SUMMARY_COLUMNS) + "\n")
    return rows


def format_report(rows: list[dict]) -> str:
    header = SUMMARY_COLUMNS
    table = [header] + [
        ["" if row[c] is None else (f"{row[c]:.2f}" if isinstance(row[c], float) else str(row[c])) for c in header]
        for row in rows
    ]
    widths = [max(len(line[i]) for line in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip() for line in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
