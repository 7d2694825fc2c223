"""Self-describing artifact headers: package version plus a hash of the producing config."""

from __future__ import annotations

import hashlib
import json

from . import __version__

PREFIX = "lexdist "


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def header(kind: str, config: dict) -> str:
    """One comment line, without the leading ``# ``."""
    return f"{PREFIX}{kind} version={__version__} config={config_hash(config)}"


def is_header(line: str) -> bool:
    return line.startswith("# " + PREFIX)
