"""Flat key-value config files with dotted section prefixes.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Keys are validated against the invoking command's schema; unknown keys
are hard errors so that misconfigured sweeps fail loudly.  Matrices are
written as semicolon-separated rows of comma-separated entries
(`0,0;0,0`), lists as comma-separated values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ConfigError(Exception):
    """Malformed config file, unknown key, or bad value."""


def parse_config(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = val.strip()
    return out


def validate_keys(cfg: dict[str, str], allowed: set[str], context: str) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown key(s): {', '.join(unknown)}")


class Config:
    """Typed accessor over parsed key-value pairs."""

    def __init__(self, raw: dict[str, str]):
        self.raw = raw

    def _get(self, key, default):
        if key in self.raw:
            return self.raw[key]
        return default

    def str(self, key: str, default: str | None = None) -> str | None:
        return self._get(key, default)

    def float(self, key: str, default: float | None = None) -> float | None:
        val = self._get(key, None)
        if val is None:
            return default
        try:
            return float(val)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {val!r}") from None

    def int(self, key: str, default: int | None = None) -> int | None:
        val = self._get(key, None)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {val!r}") from None

    def bool(self, key: str, default: bool = False) -> bool:
        val = self._get(key, None)
        if val is None:
            return default
        low = val.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {val!r}")

    def float_list(self, key: str, default: list[float] | None = None) -> list[float]:
        val = self._get(key, None)
        if val is None:
            return list(default) if default is not None else []
        if val == "":
            return []
        try:
            return [float(v) for v in val.split(",")]
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers") from None

    def int_list(self, key: str, default: list[int] | None = None) -> list[int]:
        val = self._get(key, None)
        if val is None:
            return list(default) if default is not None else []
        if val == "":
            return []
        try:
            return [int(v) for v in val.split(",")]
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated integers") from None

    def vector(self, key: str, default=None) -> np.ndarray | None:
        val = self._get(key, None)
        if val is None:
            return None if default is None else np.asarray(default, dtype=float)
        try:
            return np.array([float(v) for v in val.split(",")])
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers") from None

    def matrix(self, key: str, default=None) -> np.ndarray | None:
        val = self._get(key, None)
        if val is None:
            return None if default is None else np.asarray(default, dtype=float)
        try:
            rows = [[float(v) for v in row.split(",")] for row in val.split(";")]
        except ValueError:
            raise ConfigError(f"{key}: expected rows 'a,b;c,d'") from None
        m = np.array(rows)
        if m.ndim != 2:
            raise ConfigError(f"{key}: ragged matrix")
        return m


def fingerprint(items: dict) -> str:
    """Stable short hash of configuration items."""
    import hashlib

    canon = ";".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
