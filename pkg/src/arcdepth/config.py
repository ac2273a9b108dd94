"""Flat key=value config files shared by the data generator, trainer and CLI."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed config files or invalid parameter values."""


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key=value`` lines. '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def dump_config(values: dict) -> str:
    """Serialize a resolved config back to key=value text, keys sorted."""
    lines = [f"{k}={values[k]}" for k in sorted(values)]
    return "\n".join(lines) + "\n"


def coerce(key: str, raw: str, kind: type):
    """Convert a raw string to int/float/bool/str with a config-flavored error."""
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind.__name__}") from exc
