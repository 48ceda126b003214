"""Tiny convolutional peak regressor: forward, gradients, weight format.

This module is deliberately self-contained (stdlib + numpy only, no
package-relative imports) because its source file is copied verbatim into
exported servable archives; the archived copy must run standalone.

Architecture (fixed, fingerprinted):

    input  (n, 1, 11, 11) float32
    conv 3x3, 1->16, ReLU, valid padding   -> (n, 16, 9, 9)
    conv 3x3, 16->8, ReLU, valid padding   -> (n, 8, 7, 7)
    flatten                                -> (n, 392)
    dense 392->64, ReLU                    -> (n, 64)
    dense 64->2                            -> (n, 2)
    sigmoid * 11                           -> (n, 2) in (0, 11)

Execution profiles: "strict-f32" keeps every array and accumulation in
float32; "f64-accumulate" computes the whole forward pass in float64 and
casts the final output to float32. All contractions go through
numpy.einsum with optimize=False so no BLAS kernel choice can perturb
bit-level reproducibility.

Weight file format (TNW1): magic ``TNW1``, 16 ASCII hex fingerprint
characters, 4-byte big-endian parameter count, then the flat parameter
vector as little-endian float32 in the documented layer order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

PROFILES = ("strict-f32", "f64-accumulate")

ARCHITECTURE = [
    {"layer": "conv", "kernel": [3, 3], "in": 1, "out": 16, "activation": "relu"},
    {"layer": "conv", "kernel": [3, 3], "in": 16, "out": 8, "activation": "relu"},
    {"layer": "flatten", "features": 392},
    {"layer": "dense", "in": 392, "out": 64, "activation": "relu"},
    {"layer": "dense", "in": 64, "out": 2, "activation": "sigmoid_x11"},
]

# (name, shape, fan_in, fan_out); flat layout is this order, C-contiguous.
PARAM_SPECS = [
    ("conv1_w", (16, 1, 3, 3), 1 * 9, 16 * 9),
    ("conv1_b", (16,), None, None),
    ("conv2_w", (8, 16, 3, 3), 16 * 9, 8 * 9),
    ("conv2_b", (8,), None, None),
    ("fc1_w", (64, 392), 392, 64),
    ("fc1_b", (64,), None, None),
    ("fc2_w", (2, 64), 64, 2),
    ("fc2_b", (2,), None, None),
]

PARAM_COUNT = sum(int(np.prod(shape)) for _, shape, _, _ in PARAM_SPECS)
FINGERPRINT = hashlib.sha256(
    json.dumps(ARCHITECTURE, sort_keys=True).encode()).hexdigest()[:16]
MAGIC = b"TNW1"
OUTPUT_SCALE = 11.0


class WeightFormatError(ValueError):
    """Weight blob does not match the fixed architecture or format."""


@dataclass
class TinyNetWeights:
    values: np.ndarray  # flat float32, PARAM_COUNT entries
    fingerprint: str = FINGERPRINT

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        if self.values.size != PARAM_COUNT:
            raise WeightFormatError(
                f"expected {PARAM_COUNT} parameters, got {self.values.size}")


def check_fingerprint(weights: TinyNetWeights) -> None:
    if weights.fingerprint != FINGERPRINT:
        raise WeightFormatError(
            f"architecture fingerprint mismatch: {weights.fingerprint} != {FINGERPRINT}")


def unflatten(values: np.ndarray) -> dict:
    params = {}
    offset = 0
    for name, shape, _, _ in PARAM_SPECS:
        size = int(np.prod(shape))
        params[name] = values[offset:offset + size].reshape(shape)
        offset += size
    return params


def flatten(params: dict) -> np.ndarray:
    return np.concatenate([np.asarray(params[name]).reshape(-1)
                           for name, _, _, _ in PARAM_SPECS])


def zero_weights() -> TinyNetWeights:
    return TinyNetWeights(values=np.zeros(PARAM_COUNT, dtype=np.float32))


def init_weights(uniform_source) -> TinyNetWeights:
    """Glorot-uniform weights (zero biases) from a uniform() -> [0,1) source."""
    chunks = []
    for name, shape, fan_in, fan_out in PARAM_SPECS:
        size = int(np.prod(shape))
        if fan_in is None:  # bias
            chunks.append(np.zeros(size, dtype=np.float32))
            continue
        limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
        draws = np.array([uniform_source.uniform() for _ in range(size)])
        chunks.append(((2.0 * draws - 1.0) * limit).astype(np.float32))
    return TinyNetWeights(values=np.concatenate(chunks))


def _conv_valid(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # x: (n, c_in, H, W), w: (c_out, c_in, 3, 3) -> (n, c_out, H-2, W-2)
    n, _, height, width = x.shape
    out_h, out_w = height - 2, width - 2
    out = np.zeros((n, w.shape[0], out_h, out_w), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            out += np.einsum("ncij,oc->noij",
                             x[:, :, di:di + out_h, dj:dj + out_w],
                             w[:, :, di, dj], optimize=False)
    return out + b[None, :, None, None]


def _dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ni,oi->no", x, w, optimize=False) + b[None, :]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_input(x: np.ndarray) -> None:
    if x.ndim != 4 or x.shape[1:] != (1, 11, 11):
        raise ValueError(f"input must be (n, 1, 11, 11), got {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")


def _forward_cached(params: dict, x: np.ndarray) -> dict:
    z1 = _conv_valid(x, params["conv1_w"], params["conv1_b"])
    a1 = np.maximum(z1, 0)
    z2 = _conv_valid(a1, params["conv2_w"], params["conv2_b"])
    a2 = np.maximum(z2, 0)
    flat = a2.reshape(a2.shape[0], -1)
    z3 = _dense(flat, params["fc1_w"], params["fc1_b"])
    a3 = np.maximum(z3, 0)
    z4 = _dense(a3, params["fc2_w"], params["fc2_b"])
    sig = _sigmoid(z4)
    out = OUTPUT_SCALE * sig
    return {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2, "flat": flat,
            "z3": z3, "a3": a3, "z4": z4, "sig": sig, "out": out}


def forward(weights: TinyNetWeights, x: np.ndarray,
            profile: str = "strict-f32") -> np.ndarray:
    """Batch forward pass; returns (n, 2) float32 positions in (0, 11)."""
    check_fingerprint(weights)
    if profile not in PROFILES:
        raise ValueError(f"unknown execution profile: {profile!r}")
    dtype = np.float32 if profile == "strict-f32" else np.float64
    x = np.ascontiguousarray(x, dtype=dtype)
    _check_input(x)
    params = unflatten(weights.values.astype(dtype, copy=False))
    out = _forward_cached(params, x)["out"]
    return np.ascontiguousarray(out, dtype=np.float32)


def loss_and_grads(params: dict, x: np.ndarray, truths: np.ndarray) -> tuple:
    """Mean squared Euclidean distance and its analytic parameter gradients.

    Works in whatever dtype `params`/`x` carry (float32 for training,
    float64 for gradient checking).
    """
    n = x.shape[0]
    cache = _forward_cached(params, x)
    diff = cache["out"] - truths
    loss = float((diff * diff).sum() / n)

    dtype = x.dtype
    two_over_n = np.asarray(2.0 / n, dtype=dtype)
    d_out = diff * two_over_n
    sig = cache["sig"]
    scale = np.asarray(OUTPUT_SCALE, dtype=dtype)
    g4 = d_out * scale * sig * (1 - sig)

    grads = {}
    grads["fc2_w"] = np.einsum("no,ni->oi", g4, cache["a3"], optimize=False)
    grads["fc2_b"] = g4.sum(axis=0)
    d_a3 = np.einsum("no,oi->ni", g4, params["fc2_w"], optimize=False)
    g3 = d_a3 * (cache["z3"] > 0)
    grads["fc1_w"] = np.einsum("no,ni->oi", g3, cache["flat"], optimize=False)
    grads["fc1_b"] = g3.sum(axis=0)
    d_flat = np.einsum("no,oi->ni", g3, params["fc1_w"], optimize=False)
    d_a2 = d_flat.reshape(cache["a2"].shape)
    g2 = d_a2 * (cache["z2"] > 0)

    a1 = cache["a1"]
    grads["conv2_w"] = np.empty_like(params["conv2_w"])
    d_a1 = np.zeros_like(a1)
    for di in range(3):
        for dj in range(3):
            window = a1[:, :, di:di + 7, dj:dj + 7]
            grads["conv2_w"][:, :, di, dj] = np.einsum(
                "noij,ncij->oc", g2, window, optimize=False)
            d_a1[:, :, di:di + 7, dj:dj + 7] += np.einsum(
                "noij,oc->ncij", g2, params["conv2_w"][:, :, di, dj], optimize=False)
    grads["conv2_b"] = g2.sum(axis=(0, 2, 3))

    g1 = d_a1 * (cache["z1"] > 0)
    grads["conv1_w"] = np.empty_like(params["conv1_w"])
    for di in range(3):
        for dj in range(3):
            window = x[:, :, di:di + 9, dj:dj + 9]
            grads["conv1_w"][:, :, di, dj] = np.einsum(
                "noij,ncij->oc", g1, window, optimize=False)
    grads["conv1_b"] = g1.sum(axis=(0, 2, 3))
    return loss, grads


def serialize_weights(weights: TinyNetWeights) -> bytes:
    check_fingerprint(weights)
    header = MAGIC + weights.fingerprint.encode("ascii") + struct.pack(">I", PARAM_COUNT)
    return header + weights.values.astype("<f4").tobytes()


def deserialize_weights(blob: bytes) -> TinyNetWeights:
    if blob[:4] != MAGIC:
        raise WeightFormatError("bad weight magic")
    fingerprint = blob[4:20].decode("ascii", errors="replace")
    if fingerprint != FINGERPRINT:
        raise WeightFormatError(
            f"architecture fingerprint mismatch: {fingerprint} != {FINGERPRINT}")
    (count,) = struct.unpack(">I", blob[20:24])
    if count != PARAM_COUNT or len(blob) != 24 + 4 * count:
        raise WeightFormatError("weight blob has wrong parameter count")
    values = np.frombuffer(blob, dtype="<f4", offset=24, count=count)
    return TinyNetWeights(values=values.copy())


def load_weights(path) -> TinyNetWeights:
    with open(path, "rb") as fh:
        return deserialize_weights(fh.read())


def save_weights(path, weights: TinyNetWeights) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_weights(weights))
