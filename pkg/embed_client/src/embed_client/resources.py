"""Access to files packaged under embed_client/fixtures."""

from __future__ import annotations

from importlib import resources


def fixture_path(name: str) -> str:
    path = resources.files("embed_client").joinpath("fixtures", name)
    return str(path)
