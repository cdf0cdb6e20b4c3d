"""Run configuration: flat key=value files, flag overrides, digests.

Config files are TOML-style scalars only, one ``key = value`` per line
('#' comments allowed). Precedence is defaults < file < flags, and every
run persists its resolved configuration next to its outputs so any
reported number can be traced to the exact settings that produced it.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

from .errors import ConfigError


def _parse_scalar(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw == "true":
        return True
    if raw == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = _parse_scalar(value)
    return values


def format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class RunConfig:
    """Merged effective configuration with a content digest."""

    values: dict = field(default_factory=dict)

    @classmethod
    def resolve(cls, defaults: dict, config_path=None, overrides: dict | None = None) -> "RunConfig":
        merged = dict(defaults)
        if config_path:
            file_values = parse_config_file(config_path)
            unknown = set(file_values) - set(defaults)
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            merged.update(file_values)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        return cls(merged)

    @property
    def digest(self) -> str:
        payload = "\n".join(f"{k} = {format_scalar(self.values[k])}" for k in sorted(self.values))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def write_resolved(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "resolved_config.txt")
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.values):
                fh.write(f"{key} = {format_scalar(self.values[key])}\n")
            fh.write(f"# digest {self.digest}\n")
        return path
