"""JSON checkpoint envelope for parameter and importance vectors.

Floats are serialized through repr (the json default), which round-trips
float64 values bit-exactly, so save/load is lossless.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .ewc import FisherDiag
from .model import ModelArch, ParamVector

SCHEMA_VERSION = 1


def _arch_doc(arch: ModelArch) -> dict:
    return {"V": arch.vocab_size, "d": arch.embed_dim, "C": arch.num_classes}


def _arch_from_doc(doc: dict) -> ModelArch:
    return ModelArch(vocab_size=doc["V"], embed_dim=doc["d"], num_classes=doc["C"])


def save_params(path: str | Path, params: ParamVector) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "params",
        "arch": _arch_doc(params.arch),
        "values": params.values.tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def save_fisher(path: str | Path, fisher: FisherDiag, arch: ModelArch) -> None:
    if len(fisher) != arch.parameter_count:
        raise InvalidInput("importance vector does not match the architecture")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "fisher",
        "source": fisher.source,
        "arch": _arch_doc(arch),
        "values": fisher.values.tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> ParamVector | FisherDiag:
    """Load either kind of checkpoint; importance anchors are not persisted."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInput(f"unsupported checkpoint schema: {doc.get('schema_version')!r}")
    arch = _arch_from_doc(doc["arch"])
    values = np.asarray(doc["values"], dtype=np.float64)
    kind = doc.get("kind", "params")
    if kind == "params":
        return ParamVector(values, arch)
    if kind == "fisher":
        return FisherDiag(values, doc["source"], anchor=None)
    raise InvalidInput(f"unknown checkpoint kind: {kind!r}")


def load_params(path: str | Path) -> ParamVector:
    loaded = load_checkpoint(path)
    if not isinstance(loaded, ParamVector):
        raise InvalidInput(f"{path} does not hold a parameter checkpoint")
    return loaded
