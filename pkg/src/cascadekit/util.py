"""Shared plumbing: seeded RNG sub-streams and flat key/value config files."""

from __future__ import annotations

import hashlib
import re

import numpy as np

__all__ = ["substream", "parse_config_text", "read_config", "format_config"]


def substream(seed: int, label: str) -> np.random.Generator:
    """Return a Generator for the named sub-stream of a master seed.

    Every source of randomness in the toolkit draws from a stream keyed by
    (seed, label), so components (data, init, optimizer, ...) can be varied
    independently while a single seed still pins the whole run.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False}


def _parse_scalar(text: str):
    word = text.strip()
    if len(word) >= 2 and word[0] == word[-1] and word[0] in "'\"":
        return word[1:-1]
    if word.lower() in _BOOL_WORDS:
        return _BOOL_WORDS[word.lower()]
    try:
        return int(word)
    except ValueError:
        pass
    try:
        return float(word)
    except ValueError:
        pass
    return word


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part) for part in inner.split(",")]
    return _parse_scalar(text)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse a flat ``key = value`` config document into a dict.

    One assignment per line; ``#`` starts a comment; values may be scalars
    (int/float/bool/string) or bracketed comma lists like ``kappa = [1, 51.6]``.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$", line)
        if match is None:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = match.group(1), match.group(2)
        if key in out:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _parse_value(value)
    return out


def read_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def format_config(items: dict) -> str:
    """Render a dict back to the flat ``key = value`` format (diff-able runs)."""
    lines = []
    for key, value in items.items():
        if isinstance(value, (list, tuple)):
            rendered = "[" + ", ".join(str(v) for v in value) + "]"
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
