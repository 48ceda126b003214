"""Length-prefixed binary frames for servable invocation.

This module is deliberately self-contained (stdlib + numpy only) because
its source file is copied verbatim into exported servable archives.

Wire format (bit-exact):

    frame   := <4-byte big-endian payload length> <payload>
    payload := <4-byte big-endian header length> <header JSON, UTF-8,
               sorted keys, compact separators> <raw tensor bytes>

Tensor bytes are C-contiguous little-endian; their count must equal
product(shape) * element size. Request headers carry at least: kind,
model, element_type, shape, element_count, profile. Response headers
carry: status ("ok" | "error"), and for ok responses element_type and
shape; error responses carry a detail string.
"""

from __future__ import annotations

import json
import struct

import numpy as np

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 1 << 30
ELEMENT_TYPES = {"float32": "<f4", "float64": "<f8"}
ELEMENT_SIZES = {"float32": 4, "float64": 8}


class FrameProtocolError(ValueError):
    """Bytes on the wire do not form a legal frame."""


def encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_payload(header: dict, tensor: bytes = b"") -> bytes:
    head = encode_header(header)
    return struct.pack(">I", len(head)) + head + tensor


def encode_frame(header: dict, tensor: bytes = b"") -> bytes:
    payload = encode_payload(header, tensor)
    if len(payload) > MAX_FRAME_BYTES:
        raise FrameProtocolError(f"frame too large: {len(payload)} bytes")
    return struct.pack(">I", len(payload)) + payload


def split_payload(payload: bytes) -> tuple[dict, bytes]:
    if len(payload) < 4:
        raise FrameProtocolError("payload shorter than its header length prefix")
    (head_len,) = struct.unpack(">I", payload[:4])
    if 4 + head_len > len(payload):
        raise FrameProtocolError(
            f"declared header length {head_len} exceeds payload of {len(payload)} bytes")
    try:
        header = json.loads(payload[4:4 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameProtocolError(f"unparseable frame header: {exc}") from exc
    if not isinstance(header, dict):
        raise FrameProtocolError("frame header must be a JSON object")
    return header, payload[4 + head_len:]


def decode_frame(data: bytes) -> tuple[dict, bytes]:
    """Parse one complete frame; the declared length must match exactly."""
    if len(data) < 4:
        raise FrameProtocolError(f"frame shorter than its length prefix: {len(data)} bytes")
    (length,) = struct.unpack(">I", data[:4])
    if length > MAX_FRAME_BYTES:
        raise FrameProtocolError(f"declared frame length too large: {length}")
    if len(data) - 4 != length:
        raise FrameProtocolError(
            f"declared payload length {length} != actual {len(data) - 4}")
    return split_payload(data[4:])


def read_frame(stream) -> tuple[dict, bytes]:
    """Read one frame from a binary stream (blocking, exact)."""
    prefix = stream.read(4)
    if len(prefix) < 4:
        raise FrameProtocolError("stream ended before frame length prefix")
    (length,) = struct.unpack(">I", prefix)
    if length > MAX_FRAME_BYTES:
        raise FrameProtocolError(f"declared frame length too large: {length}")
    payload = stream.read(length)
    if len(payload) != length:
        raise FrameProtocolError(
            f"stream ended mid-frame: got {len(payload)} of {length} bytes")
    return split_payload(payload)


def encode_tensor(array: np.ndarray) -> bytes:
    dtype = str(array.dtype)
    if dtype not in ELEMENT_TYPES:
        raise FrameProtocolError(f"unsupported tensor element type: {dtype}")
    return np.ascontiguousarray(array).astype(ELEMENT_TYPES[dtype]).tobytes()


def decode_tensor(data: bytes, shape, element_type: str) -> np.ndarray:
    if element_type not in ELEMENT_TYPES:
        raise FrameProtocolError(f"unsupported tensor element type: {element_type}")
    count = 1
    for dim in shape:
        if not isinstance(dim, int) or dim < 0:
            raise FrameProtocolError(f"bad tensor shape: {shape}")
        count *= dim
    expected = count * ELEMENT_SIZES[element_type]
    if len(data) != expected:
        raise FrameProtocolError(
            f"tensor byte count {len(data)} != product(shape) * element size {expected}")
    flat = np.frombuffer(data, dtype=ELEMENT_TYPES[element_type], count=count)
    return np.ascontiguousarray(flat.reshape(shape))


def inference_request(model: str, array: np.ndarray, profile: str,
                      extra: dict | None = None) -> tuple[dict, bytes]:
    """Build the (header, tensor bytes) pair for one inference call."""
    dtype = str(array.dtype)
    header = {
        "protocol_version": PROTOCOL_VERSION,
        "kind": "inference",
        "model": model,
        "element_type": dtype,
        "shape": [int(d) for d in array.shape],
        "element_count": int(array.size),
        "profile": profile,
    }
    if extra:
        header.update(extra)
    return header, encode_tensor(array)


def ok_response(array: np.ndarray) -> tuple[dict, bytes]:
    header = {
        "protocol_version": PROTOCOL_VERSION,
        "status": "ok",
        "element_type": str(array.dtype),
        "shape": [int(d) for d in array.shape],
    }
    return header, encode_tensor(array)


def error_response(detail: str) -> dict:
    return {"protocol_version": PROTOCOL_VERSION, "status": "error", "detail": detail}
