"""Helpers for strict parsing of JSON-style configuration mappings.

Unknown keys are rejected and every error message carries the path of the
offending key, so config mistakes surface immediately instead of being
silently ignored.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ConfigError", "require_mapping", "take", "finish", "as_matrix", "as_vector"]


class ConfigError(ValueError):
    """Configuration error with the JSON path of the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path or "<root>"
        super().__init__(f"{self.path}: {message}")


def require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    return value


class _Missing:
    pass


_MISSING = _Missing()


def take(mapping: dict, key: str, path: str, default=_MISSING):
    """Pop a key from a mapping, failing with its path when required."""
    if key in mapping:
        return mapping.pop(key)
    if isinstance(default, _Missing):
        raise ConfigError(path, f"missing required key {key!r}")
    return default


def finish(mapping: dict, path: str) -> None:
    """Reject any keys that were not consumed."""
    if mapping:
        extra = ", ".join(sorted(map(repr, mapping)))
        raise ConfigError(path, f"unknown key(s): {extra}")


def as_vector(value, path: str, length: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a list of numbers") from None
    if arr.ndim != 1:
        raise ConfigError(path, f"expected a 1-d list, got shape {arr.shape}")
    if length is not None and arr.size != length:
        raise ConfigError(path, f"expected length {length}, got {arr.size}")
    return arr


def as_matrix(value, path: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a matrix (list of lists of numbers)") from None
    if arr.ndim != 2:
        raise ConfigError(path, f"expected a 2-d matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise ConfigError(path, f"expected shape {shape}, got {arr.shape}")
    return arr
