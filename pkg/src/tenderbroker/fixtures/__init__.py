"""Bundled fixture documents."""
from __future__ import annotations

from importlib import resources
from pathlib import Path


def path(name: str) -> Path:
    """Filesystem path of a bundled fixture, e.g. ``path("sugarcrm-partial")``."""
    if not name.endswith((".json", ".toml")):
        name += ".json"
    return Path(str(resources.files(__name__).joinpath(name)))


def read(name: str) -> bytes:
    return path(name).read_bytes()
