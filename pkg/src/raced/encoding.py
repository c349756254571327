"""Canonical byte encoding for signed messages and ledger payloads.

Values are lists of ints, strings, bytes, None and nested lists.  Bytes are
tagged so decoding is unambiguous; the JSON form is compact with no
whitespace, which makes the encoding byte-stable across runs.
"""
from __future__ import annotations

import json
from typing import Any


def _wrap(value: Any) -> Any:
    if isinstance(value, (bytes, bytearray)):
        return {"b": bytes(value).hex()}
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, (list, tuple)):
        return [_wrap(v) for v in value]
    raise TypeError(f"cannot canonically encode {type(value).__name__}")


def _unwrap(value: Any) -> Any:
    if isinstance(value, dict):
        return bytes.fromhex(value["b"])
    if isinstance(value, list):
        return [_unwrap(v) for v in value]
    return value


def canonical(*fields: Any) -> bytes:
    return json.dumps(_wrap(list(fields)), separators=(",", ":")).encode()


def decode(payload: bytes) -> list:
    return _unwrap(json.loads(payload.decode()))


def node_key(node: Any) -> tuple:
    """Total order over node handles: ints numerically, then everything else by str."""
    if isinstance(node, int) and not isinstance(node, bool):
        return (0, node, "")
    return (1, 0, str(node))
