"""Prompt template loading and {{placeholder}} substitution."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import ConfigError

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")

TEMPLATE_NAMES = ("plan", "prune", "generate", "check")


def load_template(name: str, templates_dir: Path | str | None = None) -> str:
    """Load a template by name, preferring an override directory if given."""
    filename = f"{name}.tmpl"
    if templates_dir is not None:
        path = Path(templates_dir) / filename
        if not path.is_file():
            raise ConfigError(f"template not found: {path}")
        return path.read_text(encoding="utf-8")
    ref = resources.files("splatopt").joinpath("templates", filename)
    if not ref.is_file():
        raise ConfigError(f"unknown template {name!r}")
    return ref.read_text(encoding="utf-8")


def render_template(template: str, values: Mapping[str, str]) -> str:
    """Substitute every {{name}}. Unknown or leftover placeholders are errors."""

    def replace(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise ConfigError(f"template placeholder {{{{{key}}}}} has no value")
        return values[key]

    return _PLACEHOLDER.sub(replace, template)
