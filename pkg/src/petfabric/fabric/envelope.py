"""Envelope wire format: one sensor message as a canonical CBOR map.

Payload keys (unsigned integers, fixed meaning):

====  =======================================================
key   field
====  =======================================================
0     sensor id (text)
1     sequence number (uint)
2     scheme tag (uint): 0 raw, 1 ldp, 2 gdp, 3 ass-share, 4 krr
3     value (int; share value for scheme 3, then non-negative)
4     share channel index (uint >= 1; present iff scheme 3)
5     epsilon (float; present iff scheme in {1, 2, 4})
6     origin timestamp, microseconds (uint)
====  =======================================================

The topic travels in the transport frame, not the payload, mirroring how a
broker routes on the topic without parsing the body.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

from . import cbor


class Scheme(IntEnum):
    """How the value in the payload was produced."""

    RAW = 0
    LDP = 1
    GDP = 2
    ASS_SHARE = 3
    KRR = 4


_KEY_SENSOR = 0
_KEY_SEQUENCE = 1
_KEY_SCHEME = 2
_KEY_VALUE = 3
_KEY_SHARE_INDEX = 4
_KEY_EPSILON = 5
_KEY_TIMESTAMP = 6

_MANDATORY_KEYS = (_KEY_SENSOR, _KEY_SEQUENCE, _KEY_SCHEME, _KEY_VALUE, _KEY_TIMESTAMP)
_ALL_KEYS = frozenset(range(7))
_SCHEMES_WITH_EPSILON = frozenset({Scheme.LDP, Scheme.GDP, Scheme.KRR})


class EnvelopeError(ValueError):
    """Payload violates the wire-format contract."""


def _require_uint(payload: dict, key: int, name: str) -> int:
    v = payload[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise EnvelopeError(f"key {key} ({name}) must be an unsigned integer, got {v!r}")
    return v


@dataclass(frozen=True)
class Envelope:
    """One pub/sub message: routing topic plus the CBOR payload fields."""

    topic: str
    sensor_id: str
    sequence: int
    scheme: Scheme
    value: int
    share_index: Optional[int] = None
    epsilon: Optional[float] = None
    timestamp_us: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.sensor_id, str):
            raise EnvelopeError(f"sensor_id must be text, got {self.sensor_id!r}")
        if self.sequence < 0:
            raise EnvelopeError(f"sequence must be >= 0, got {self.sequence}")
        if self.timestamp_us < 0:
            raise EnvelopeError(f"timestamp_us must be >= 0, got {self.timestamp_us}")
        try:
            scheme = Scheme(self.scheme)
        except ValueError:
            raise EnvelopeError(f"unknown scheme tag {self.scheme!r}") from None
        object.__setattr__(self, "scheme", scheme)
        if scheme is Scheme.ASS_SHARE:
            if self.share_index is None:
                raise EnvelopeError("ass-share envelope requires a share_index")
            if self.share_index < 1:
                raise EnvelopeError(f"share_index must be >= 1, got {self.share_index}")
            if self.value < 0:
                raise EnvelopeError(f"share values are field elements, got {self.value}")
        elif self.share_index is not None:
            raise EnvelopeError(f"share_index is only valid for ass-share, not {scheme.name}")
        if scheme in _SCHEMES_WITH_EPSILON:
            if self.epsilon is None:
                raise EnvelopeError(f"{scheme.name} envelope requires epsilon")
            if not self.epsilon > 0:
                raise EnvelopeError(f"epsilon must be positive, got {self.epsilon}")
        elif self.epsilon is not None:
            raise EnvelopeError(f"epsilon is only valid for ldp/gdp/krr, not {scheme.name}")


def cbor_encode(env: Envelope) -> bytes:
    """Serialize the payload map canonically; same envelope, same bytes."""
    payload: dict[int, object] = {
        _KEY_SENSOR: env.sensor_id,
        _KEY_SEQUENCE: env.sequence,
        _KEY_SCHEME: int(env.scheme),
        _KEY_VALUE: env.value,
        _KEY_TIMESTAMP: env.timestamp_us,
    }
    if env.share_index is not None:
        payload[_KEY_SHARE_INDEX] = env.share_index
    if env.epsilon is not None:
        payload[_KEY_EPSILON] = float(env.epsilon)
    return cbor.encode(payload)


def cbor_decode(data: bytes, topic: str = "") -> Envelope:
    """Parse and validate payload bytes; the topic is supplied out-of-band."""
    payload = cbor.decode(data)
    if not isinstance(payload, dict):
        raise EnvelopeError(f"payload must be a CBOR map, got {type(payload).__name__}")
    missing = [k for k in _MANDATORY_KEYS if k not in payload]
    if missing:
        raise EnvelopeError(f"missing mandatory payload keys {missing}")
    unknown = sorted(set(payload) - _ALL_KEYS)
    if unknown:
        raise EnvelopeError(f"unknown payload keys {unknown}")

    sensor_id = payload[_KEY_SENSOR]
    if not isinstance(sensor_id, str):
        raise EnvelopeError(f"key 0 (sensor id) must be text, got {sensor_id!r}")
    sequence = _require_uint(payload, _KEY_SEQUENCE, "sequence")
    scheme_tag = _require_uint(payload, _KEY_SCHEME, "scheme")
    try:
        scheme = Scheme(scheme_tag)
    except ValueError:
        raise EnvelopeError(f"unknown scheme tag {scheme_tag}") from None
    value = payload[_KEY_VALUE]
    if isinstance(value, bool) or not isinstance(value, int):
        raise EnvelopeError(f"key 3 (value) must be an integer, got {value!r}")
    timestamp_us = _require_uint(payload, _KEY_TIMESTAMP, "timestamp")

    share_index = None
    if _KEY_SHARE_INDEX in payload:
        share_index = _require_uint(payload, _KEY_SHARE_INDEX, "share index")
    epsilon = None
    if _KEY_EPSILON in payload:
        epsilon = payload[_KEY_EPSILON]
        if not isinstance(epsilon, float):
            raise EnvelopeError(f"key 5 (epsilon) must be a float, got {epsilon!r}")

    try:
        return Envelope(
            topic=topic,
            sensor_id=sensor_id,
            sequence=sequence,
            scheme=scheme,
            value=value,
            share_index=share_index,
            epsilon=epsilon,
            timestamp_us=timestamp_us,
        )
    except EnvelopeError as exc:
        raise EnvelopeError(f"inconsistent payload: {exc}") from None
