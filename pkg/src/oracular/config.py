"""Line-oriented ``key=value`` run configuration with flag > file > default precedence."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_dir: str | None = None
    epochs: int = 200
    learning_rate: float = 0.001
    z_dim: int = 64
    dropout_p: float = 0.3
    seed: int = 0
    hop: int = 1
    min_motif_len: int = 4


_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
KEYS = tuple(_TYPES)


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    return raw


def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r} (known: {', '.join(KEYS)})")
        values[key] = _convert(key, raw.strip())
    return values


def read_config(path) -> dict:
    return parse_config(Path(path).read_text())


def resolve(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Merge sources: a flag set to anything but ``None`` beats the file, which beats defaults."""
    merged = {}
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if key not in _TYPES:
                raise ConfigError(f"unknown key {key!r}")
            if value is not None:
                merged[key] = value
    return RunConfig(**merged)
