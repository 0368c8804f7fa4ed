"""Versioned JSON checkpoint: configs plus every tensor as base64 little-endian float64."""

from __future__ import annotations

import base64
import dataclasses
import json
from pathlib import Path

import numpy as np

from .layers import ShapeMismatch
from .model import CvrnnParams, ModelConfig, param_shapes
from .train import TrainingConfig

FORMAT = "oracular-cvrnn"
VERSION = 1


class CheckpointError(ShapeMismatch):
    """Checkpoint is unreadable or does not match the architecture it declares."""


def dumps(params: CvrnnParams, config: TrainingConfig) -> str:
    training = dataclasses.asdict(config)
    model = training.pop("model")
    tensors = {
        name: {
            "shape": list(a.shape),
            "dtype": "<f8",
            "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii"),
        }
        for name, a in params.named_arrays()
    }
    doc = {"format": FORMAT, "version": VERSION, "model": model, "training": training, "tensors": tensors}
    return json.dumps(doc, sort_keys=True, indent=1)


def loads(text: str) -> tuple[CvrnnParams, TrainingConfig]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not JSON: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"not an {FORMAT} checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    try:
        model = ModelConfig(**{**doc["model"], "conv_channels": tuple(doc["model"]["conv_channels"])})
        config = TrainingConfig(model=model, **doc["training"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad configuration block: {exc}") from exc

    expected = param_shapes(model)
    tensors = doc.get("tensors", {})
    if set(tensors) != set(expected):
        missing, extra = set(expected) - set(tensors), set(tensors) - set(expected)
        raise CheckpointError(f"tensor names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
    arrays = {}
    for name, shape in expected.items():
        entry = tensors[name]
        if tuple(entry["shape"]) != shape:
            raise CheckpointError(f"{name}: checkpoint shape {entry['shape']} but model needs {list(shape)}")
        raw = base64.b64decode(entry["data"])
        if len(raw) != 8 * int(np.prod(shape)):
            raise CheckpointError(f"{name}: {len(raw)} data bytes for shape {list(shape)}")
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(float).reshape(shape)
    return CvrnnParams.from_named(arrays), config


def save(path, params: CvrnnParams, config: TrainingConfig) -> None:
    Path(path).write_text(dumps(params, config))


def load(path) -> tuple[CvrnnParams, TrainingConfig]:
    return loads(Path(path).read_text())
