"""Shipped example spaces and synthetic platform profiles."""

from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    """Filesystem path of a shipped fixture, e.g. 'flash_attention.space.json'."""
    path = resources.files(__package__) / name
    with resources.as_file(path) as p:
        return Path(p)


def fixture_names() -> list[str]:
    return sorted(
        entry.name
        for entry in resources.files(__package__).iterdir()
        if entry.name.endswith(".json")
    )
