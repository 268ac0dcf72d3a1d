"""Declarative experiment configs: YAML loading, schemas, overrides."""

from __future__ import annotations

from pathlib import Path

import yaml


class ConfigError(Exception):
    """Raised for unparsable, unknown-key, or out-of-domain configuration."""


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def _coerce(raw: str):
    """Parse an override value: YAML scalar rules (int, float, bool, str)."""
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply key=value overrides; dotted keys address nested sections."""
    out = dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        target = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = target.get(part)
            if not isinstance(node, dict):
                node = {}
            else:
                node = dict(node)
            target[part] = node
            target = node
        target[parts[-1]] = _coerce(raw)
    return out


class Field:
    """One schema entry: expected type(s) plus optional domain check."""

    def __init__(self, types, check=None, describe: str = ""):
        self.types = types if isinstance(types, tuple) else (types,)
        self.check = check
        self.describe = describe

    def validate(self, key: str, value):
        if bool not in self.types and isinstance(value, bool):
            raise ConfigError(f"{key}: expected {self._names()}, got bool")
        if not isinstance(value, self.types):
            raise ConfigError(
                f"{key}: expected {self._names()}, got {type(value).__name__}"
            )
        if self.check is not None and not self.check(value):
            raise ConfigError(f"{key}={value!r} out of domain ({self.describe})")

    def _names(self) -> str:
        return "/".join(t.__name__ for t in self.types)


def validate_config(cfg: dict, schema: dict[str, Field], name: str = "config") -> dict:
    """Check every key against the schema; unknown keys are rejected."""
    unknown = set(cfg) - set(schema)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    for key, fld in schema.items():
        if key not in cfg:
            raise ConfigError(f"{name}: missing key {key!r}")
        fld.validate(key, cfg[key])
    return cfg


def hurst_field() -> Field:
    return Field(
        (int, float), lambda v: 0.0 < v < 0.5, "Hurst index must lie in (0, 1/2)"
    )


def positive_field(types=(int, float)) -> Field:
    return Field(types, lambda v: v > 0, "must be positive")


def count_field(minimum: int = 1) -> Field:
    return Field(int, lambda v: v >= minimum, f"must be an integer >= {minimum}")
