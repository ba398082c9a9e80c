"""Deterministic seed derivation.

Every random draw in the package flows through ``numpy.random.default_rng``
(PCG64) seeded with a 64-bit integer.  Independent streams are derived from
one master seed and a path of labels via SHA-256, so results are stable
across platforms, Python versions and process boundaries:

    derive_seed(master, "ensemble-original", 3)

hashes the master seed together with the path elements and returns the first
eight bytes of the digest as an unsigned integer.
"""

from __future__ import annotations

import hashlib

_U64 = 2**64


def derive_seed(base: int, *path: int | str) -> int:
    """Derive a child seed from ``base`` and a path of labels.

    Strings and integers hash differently (``derive_seed(s, 1)`` and
    ``derive_seed(s, "1")`` are distinct streams).
    """
    h = hashlib.sha256()
    h.update(int(base % _U64).to_bytes(8, "little"))
    for part in path:
        if isinstance(part, bool):  # bool is an int subclass; forbid quietly
            raise TypeError("seed path elements must be int or str")
        if isinstance(part, int):
            h.update(b"i" + int(part % _U64).to_bytes(8, "little"))
        elif isinstance(part, str):
            h.update(b"s" + part.encode("utf-8"))
        else:
            raise TypeError(f"seed path elements must be int or str, got {type(part)!r}")
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "little")


def check_seed(value: int, name: str = "seed") -> int:
    """Validate that ``value`` is a non-negative 64-bit integer and return it."""
    from .errors import ConfigurationError

    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigurationError(f"{name} must be an integer, got {type(value).__name__}")
    if not 0 <= value < _U64:
        raise ConfigurationError(f"{name} must be in [0, 2**64), got {value}")
    return value
