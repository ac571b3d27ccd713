"""Service settings from a TOML file, overridden by TENDERBROKER_* environment variables."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

from tenderbroker.bidding import CompletionLimits

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

ENV_PREFIX = "TENDERBROKER_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BrokerConfig:
    listen: str = "127.0.0.1:8080"
    log_path: str = "tenderbroker-events.jsonl"
    fsync: bool = False
    max_candidates: int = 32
    max_depth: int = 8
    max_bids: int = 4

    def __post_init__(self) -> None:
        host, sep, port = self.listen.rpartition(":")
        if not sep or not host or not port.isdigit() or not 0 < int(port) < 65536:
            raise ConfigError(f"listen must look like host:port, got {self.listen!r}")
        for name in ("max_candidates", "max_depth", "max_bids"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def host(self) -> str:
        return self.listen.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.listen.rpartition(":")[2])

    @property
    def limits(self) -> CompletionLimits:
        return CompletionLimits(self.max_candidates, self.max_depth, self.max_bids)

    def to_dict(self) -> dict:
        return asdict(self)


def _convert(name: str, kind: type, value):
    if kind is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name} must be a boolean, got {value!r}")
    if kind is int:
        if isinstance(value, bool):
            raise ConfigError(f"{name} must be an integer")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be an integer, got {value!r}") from None
    return str(value)


_TYPES = {"listen": str, "log_path": str, "fsync": bool, "max_candidates": int, "max_depth": int, "max_bids": int}


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> BrokerConfig:
    """Defaults, then the ``[broker]`` table (or top level) of ``path``, then the environment."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        data = data.get("broker", data)
        limits = data.pop("limits", {}) if isinstance(data.get("limits"), dict) else {}
        data = {**data, **limits}
        unknown = sorted(set(data) - set(_TYPES))
        if unknown:
            raise ConfigError(f"unknown broker settings: {', '.join(unknown)}")
        values.update(data)
    for f in fields(BrokerConfig):
        key = ENV_PREFIX + f.name.upper()
        if key in env:
            values[f.name] = env[key]
    return BrokerConfig(**{k: _convert(k, _TYPES[k], v) for k, v in values.items()})
