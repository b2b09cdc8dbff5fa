"""Canonical JSON serialization shared by every signed payload.

All signatures in the protocol are computed over bytes produced here, so
the rules must be bit-exact across components (the browser client ships
its own implementation of the same rules):

  * object keys sorted by code point, ASCII-only keys
  * no insignificant whitespace (separators "," and ":")
  * strings as UTF-8, not ASCII-escaped
  * integers in decimal; floats as shortest round-trip decimal
  * NaN / Infinity rejected

Payloads that cross the Python/browser boundary must not contain
non-integer numbers; the browser implementation rejects them outright.
"""

from __future__ import annotations

import json
import math


class CanonicalizationError(ValueError):
    pass


def _check(value, path: str) -> None:
    if value is None or isinstance(value, (bool, str, int)):
        return
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise CanonicalizationError(f"non-finite number at {path}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key in value:
            if not isinstance(key, str):
                raise CanonicalizationError(f"non-string key at {path}")
            if not key.isascii():
                raise CanonicalizationError(f"non-ASCII key {key!r} at {path}")
            _check(value[key], f"{path}.{key}")
        return
    raise CanonicalizationError(f"unserializable {type(value).__name__} at {path}")


def canonical_json(value) -> bytes:
    """Serialize ``value`` to canonical JSON bytes."""
    _check(value, "$")
    return json.dumps(
        value,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def to_hex(data: bytes) -> str:
    return data.hex()


def from_hex(text: str) -> bytes:
    if not isinstance(text, str):
        raise CanonicalizationError("hex field must be a string")
    try:
        return bytes.fromhex(text)
    except ValueError as exc:
        raise CanonicalizationError(f"invalid hex: {exc}") from exc
