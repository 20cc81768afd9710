"""Protobuf wire-format primitives (the subset the ONNX schema needs).

Messages are length-delimited field streams; every field is a varint tag
``(field_number << 3) | wire_type`` followed by a payload.  Only wire types
0 (varint), 1 (64-bit), 2 (length-delimited) and 5 (32-bit) exist.
"""

from __future__ import annotations

import struct

VARINT = 0
I64 = 1
LEN = 2
I32 = 5

_U64 = 1 << 64
_I64_MAX = (1 << 63) - 1


class WireError(Exception):
    """Malformed protobuf payload."""


def encode_varint(value: int) -> bytes:
    if value < 0:
        value += _U64  # two's complement, 10-byte encoding
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise WireError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift >= 70:
            raise WireError("varint too long")


def to_signed(value: int) -> int:
    """Interpret a decoded varint as int64."""
    return value - _U64 if value > _I64_MAX else value


def tag(field: int, wire_type: int) -> bytes:
    return encode_varint((field << 3) | wire_type)


def field_varint(field: int, value: int) -> bytes:
    return tag(field, VARINT) + encode_varint(value)


def field_bytes(field: int, payload: bytes) -> bytes:
    return tag(field, LEN) + encode_varint(len(payload)) + payload


def field_string(field: int, text: str) -> bytes:
    return field_bytes(field, text.encode("utf-8"))


def field_float(field: int, value: float) -> bytes:
    return tag(field, I32) + struct.pack("<f", value)


def iter_fields(buf):
    """Yield (field_number, wire_type, payload) triples from a message.

    Payload is an int for varints, raw bytes for the other wire types.
    """
    pos = 0
    n = len(buf)
    while pos < n:
        key, pos = decode_varint(buf, pos)
        field, wire_type = key >> 3, key & 0x07
        if wire_type == VARINT:
            value, pos = decode_varint(buf, pos)
        elif wire_type == I64:
            if pos + 8 > n:
                raise WireError("truncated 64-bit field")
            value = bytes(buf[pos : pos + 8])
            pos += 8
        elif wire_type == LEN:
            length, pos = decode_varint(buf, pos)
            if pos + length > n:
                raise WireError("truncated length-delimited field")
            value = bytes(buf[pos : pos + length])
            pos += length
        elif wire_type == I32:
            if pos + 4 > n:
                raise WireError("truncated 32-bit field")
            value = bytes(buf[pos : pos + 4])
            pos += 4
        else:
            raise WireError(f"unsupported wire type {wire_type}")
        yield field, wire_type, value


def decode_packed_varints(payload: bytes) -> list[int]:
    out = []
    pos = 0
    while pos < len(payload):
        value, pos = decode_varint(payload, pos)
        out.append(to_signed(value))
    return out
