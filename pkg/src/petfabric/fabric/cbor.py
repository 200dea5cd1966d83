"""Canonical CBOR for the envelope wire format.

Deliberately a narrow subset of RFC 8949: unsigned and negative integers,
UTF-8 text strings, IEEE-754 double floats, and definite-length maps keyed
by unsigned integers in strictly ascending order. Integer heads always use
the shortest form and floats are always 8 bytes, so every representable
value has exactly one encoding. The decoder rejects everything else
(indefinite lengths, non-minimal heads, unsorted or duplicate keys, other
major types), which keeps encode/decode a bijection and makes golden byte
fixtures meaningful.
"""

from __future__ import annotations

import struct


class CborError(ValueError):
    """Base class for wire-format failures."""


class CborEncodeError(CborError):
    """Value cannot be represented in the canonical subset."""


class CborDecodeError(CborError):
    """Bytes are malformed or not in canonical form."""


_MAJOR_UINT = 0
_MAJOR_NEGINT = 1
_MAJOR_TEXT = 3
_MAJOR_MAP = 5
_MAJOR_SIMPLE = 7

_FLOAT64_HEAD = 0xFB

# (additional-info value, struct format, exclusive upper bound)
_HEAD_FORMS = (
    (24, ">B", 1 << 8),
    (25, ">H", 1 << 16),
    (26, ">I", 1 << 32),
    (27, ">Q", 1 << 64),
)
# minimal argument value for each multi-byte head width
_HEAD_MINIMA = {24: 24, 25: 1 << 8, 26: 1 << 16, 27: 1 << 32}


def _head(major: int, arg: int) -> bytes:
    if arg < 24:
        return bytes([major << 5 | arg])
    for ai, fmt, limit in _HEAD_FORMS:
        if arg < limit:
            return bytes([major << 5 | ai]) + struct.pack(fmt, arg)
    raise CborEncodeError(f"integer argument {arg} exceeds 64 bits")


def _encode_into(buf: bytearray, value) -> None:
    if isinstance(value, bool):
        raise CborEncodeError("booleans are not part of the wire subset")
    if isinstance(value, int):
        if value >= 0:
            buf += _head(_MAJOR_UINT, value)
        else:
            buf += _head(_MAJOR_NEGINT, -1 - value)
    elif isinstance(value, float):
        buf.append(_FLOAT64_HEAD)
        buf += struct.pack(">d", value)
    elif isinstance(value, str):
        data = value.encode("utf-8")
        buf += _head(_MAJOR_TEXT, len(data))
        buf += data
    elif isinstance(value, dict):
        for key in value:
            if isinstance(key, bool) or not isinstance(key, int) or key < 0:
                raise CborEncodeError(f"map keys must be unsigned integers, got {key!r}")
        buf += _head(_MAJOR_MAP, len(value))
        for key in sorted(value):
            _encode_into(buf, key)
            _encode_into(buf, value[key])
    else:
        raise CborEncodeError(f"unsupported type {type(value).__name__}")


def encode(value) -> bytes:
    """Serialize an int, float, str, or int-keyed map canonically."""
    buf = bytearray()
    _encode_into(buf, value)
    return bytes(buf)


def _read_head(data: bytes, i: int) -> tuple[int, int, int]:
    """Parse one head at offset i; returns (major, argument, next offset)."""
    major = data[i] >> 5
    ai = data[i] & 0x1F
    if ai < 24:
        return major, ai, i + 1
    if ai > 27:
        raise CborDecodeError(
            f"additional info {ai} at offset {i} (reserved or indefinite length)"
        )
    fmt = {24: ">B", 25: ">H", 26: ">I", 27: ">Q"}[ai]
    width = struct.calcsize(fmt)
    if i + 1 + width > len(data):
        raise CborDecodeError("truncated integer head")
    (arg,) = struct.unpack_from(fmt, data, i + 1)
    if arg < _HEAD_MINIMA[ai]:
        raise CborDecodeError(f"non-minimal head for argument {arg} at offset {i}")
    return major, arg, i + 1 + width


def _decode_item(data: bytes, i: int):
    if i >= len(data):
        raise CborDecodeError("truncated input")
    if data[i] >> 5 == _MAJOR_SIMPLE:
        if data[i] != _FLOAT64_HEAD:
            raise CborDecodeError(
                f"major type 7 byte 0x{data[i]:02x}: only 64-bit floats are accepted"
            )
        if i + 9 > len(data):
            raise CborDecodeError("truncated float")
        (value,) = struct.unpack_from(">d", data, i + 1)
        return value, i + 9
    major, arg, j = _read_head(data, i)
    if major == _MAJOR_UINT:
        return arg, j
    if major == _MAJOR_NEGINT:
        return -1 - arg, j
    if major == _MAJOR_TEXT:
        if j + arg > len(data):
            raise CborDecodeError("truncated text string")
        try:
            text = data[j : j + arg].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CborDecodeError(f"invalid UTF-8 in text string: {exc}") from None
        return text, j + arg
    if major == _MAJOR_MAP:
        out: dict[int, object] = {}
        prev = -1
        for _ in range(arg):
            key, j = _decode_item(data, j)
            if not isinstance(key, int) or isinstance(key, bool) or key < 0:
                raise CborDecodeError(f"map keys must be unsigned integers, got {key!r}")
            if key <= prev:
                raise CborDecodeError(
                    "map keys must be strictly ascending (canonical form)"
                )
            prev = key
            out[key], j = _decode_item(data, j)
        return out, j
    raise CborDecodeError(f"unsupported major type {major}")


def decode(data: bytes):
    """Inverse of encode(); rejects malformed or non-canonical bytes."""
    value, end = _decode_item(data, 0)
    if end != len(data):
        raise CborDecodeError(f"{len(data) - end} trailing bytes after value")
    return value
