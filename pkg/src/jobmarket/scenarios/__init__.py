"""Bundled scenario configs shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

_NAMES = ("fig1", "fig2")


def available() -> tuple[str, ...]:
    return _NAMES


def bundled_path(name: str) -> Path | None:
    """Resolve a bundled scenario by name ('fig1' or 'fig1.json')."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in _NAMES:
        return None
    ref = resources.files(__package__) / f"{stem}.json"
    with resources.as_file(ref) as path:
        return Path(path)
