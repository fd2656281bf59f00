"""Flat ``key = value`` run configuration files."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .model import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig(TrainConfig):
    data: str = ""
    out_dir: str = "runs/default"
    threads: int = 0
    deterministic: bool = True

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names})

    def resolved_threads(self) -> int:
        if self.threads:
            return self.threads
        env = os.environ.get("FFHR_THREADS")
        return int(env) if env else 0


def _convert(name, raw: str, typ):
    raw = raw.strip()
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true or false")
            return low == "true"
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {raw!r} ({exc})") from None
    return raw


def parse_pairs(pairs, base: dict | None = None) -> dict:
    """Merge ``(key, raw value)`` pairs into ``base``, typed per RunConfig fields."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out = dict(base or {})
    for key, raw in pairs:
        key = key.strip()
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _convert(key, raw, types[key])
    return out


def read_config_file(path) -> list[tuple[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    pairs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        pairs.append((key, raw))
    return pairs


def split_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    return key, raw


def load_run_config(path=None, overrides=()) -> RunConfig:
    pairs = read_config_file(path) if path else []
    pairs += [split_override(o) for o in overrides]
    values = parse_pairs(pairs)
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def write_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(format_config(cfg), encoding="utf-8")
