"""Access to the fixture files shipped inside the package."""

from __future__ import annotations

import os
from importlib import resources

from .errors import ValidationError


def fixture_path(name: str) -> str:
    """Absolute path of a packaged fixture file."""
    path = resources.files("oodselect").joinpath("fixtures", name)
    out = str(path)
    if not os.path.exists(out):
        raise ValidationError(f"no packaged fixture named {name!r}")
    return out


def resolve_path(path: str) -> str:
    """Resolve a config path: existing files win, then packaged fixtures.

    Lets shipped configs refer to "fixtures/table_b.csv" without caring
    where the package is installed.
    """
    if os.path.exists(path):
        return path
    prefix = "fixtures/"
    if path.startswith(prefix):
        return fixture_path(path[len(prefix):])
    raise ValidationError(f"path not found: {path}")
