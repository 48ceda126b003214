"""Synthetic Bragg-peak patches and the BPK1 dataset container.

Coordinate convention: a patch is an 11x11 float32 grid indexed [ix, iy];
pixel (i, j) covers the unit square with center (i + 0.5, j + 0.5), so
sub-pixel positions live in [0, 11)^2 with the first coordinate along the
first array axis.

A noiseless patch is a separable Gaussian sampled at pixel centers:

    I[i, j] = background + amplitude * exp(-(dx^2 / (2 sx^2) + dy^2 / (2 sy^2)))

with dx = (i + 0.5) - cx and dy = (j + 0.5) - cy. Noise adds independent
Gaussian perturbations of standard deviation noise_sigma * amplitude per
pixel (Box-Muller draws from the documented generator).

Per-patch draw order (one generator substream per patch, so synthesis is
order-independent): cx, cy, amplitude, sigma_x, sigma_y, background, then
121 noise values in row-major [ix, iy] order.

BPK1 file format: magic bytes ``BPK1``, 4-byte big-endian record count,
then per record 121 little-endian float32 intensities (row-major [ix, iy])
followed by 2 little-endian float32 truth coordinates (NaN, NaN when the
truth is absent).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..rng import Xoshiro256StarStar

PATCH_SIZE = 11
PIXEL_PITCH_UM = 200.0
MAGIC = b"BPK1"
RECORD_FLOATS = PATCH_SIZE * PATCH_SIZE + 2

# Partition sizes mirroring the reference dataset's 80/9/11 split.
SPLIT_PRESET = {"train": 55478, "validation": 6000, "test": 7869}

CENTER_RANGE = (2.0, 9.0)
SIGMA_RANGE = (0.5, 3.0)


@dataclass(frozen=True)
class PeakPosition:
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass
class PeakPatch:
    intensities: np.ndarray  # (11, 11) float32, [ix, iy]
    pixel_pitch_um: float = PIXEL_PITCH_UM
    truth: PeakPosition | None = None

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=np.float32)
        if self.intensities.shape != (PATCH_SIZE, PATCH_SIZE):
            raise ValidationError(
                f"patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {self.intensities.shape}")
        if not np.all(np.isfinite(self.intensities)):
            raise ValidationError("patch intensities must be finite")


@dataclass(frozen=True)
class SynthParams:
    """Distribution bounds for one synthesized patch population."""

    center_range: tuple[float, float] = CENTER_RANGE
    amplitude_range: tuple[float, float] = (0.5, 2.0)
    sigma_range: tuple[float, float] = SIGMA_RANGE
    background_range: tuple[float, float] = (0.0, 0.2)
    noise_sigma: float = 0.02  # fraction of amplitude

    def validate(self) -> None:
        lo, hi = self.center_range
        if not (CENTER_RANGE[0] <= lo <= hi <= CENTER_RANGE[1]):
            raise ValidationError(f"center_range must lie within {CENTER_RANGE}: "
                                  f"{self.center_range}")
        if not (0 < self.amplitude_range[0] <= self.amplitude_range[1]):
            raise ValidationError(f"amplitudes must be positive: {self.amplitude_range}")
        slo, shi = self.sigma_range
        if not (SIGMA_RANGE[0] <= slo <= shi <= SIGMA_RANGE[1]):
            raise ValidationError(f"sigma_range must lie within {SIGMA_RANGE}: "
                                  f"{self.sigma_range}")
        if self.background_range[0] < 0 or self.background_range[0] > self.background_range[1]:
            raise ValidationError(f"bad background_range: {self.background_range}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0: {self.noise_sigma}")


_CENTERS = np.arange(PATCH_SIZE, dtype=np.float64) + 0.5


def render_patch(cx: float, cy: float, amplitude: float, sigma_x: float,
                 sigma_y: float, background: float) -> np.ndarray:
    """Noiseless separable Gaussian sampled at pixel centers, float64."""
    gx = np.exp(-((_CENTERS - cx) ** 2) / (2.0 * sigma_x * sigma_x))
    gy = np.exp(-((_CENTERS - cy) ** 2) / (2.0 * sigma_y * sigma_y))
    return background + amplitude * np.outer(gx, gy)


def synth_patch(stream: Xoshiro256StarStar, params: SynthParams) -> PeakPatch:
    cx = stream.uniform_in(*params.center_range)
    cy = stream.uniform_in(*params.center_range)
    amplitude = stream.uniform_in(*params.amplitude_range)
    sigma_x = stream.uniform_in(*params.sigma_range)
    sigma_y = stream.uniform_in(*params.sigma_range)
    background = stream.uniform_in(*params.background_range)
    grid = render_patch(cx, cy, amplitude, sigma_x, sigma_y, background)
    if params.noise_sigma > 0:
        scale = params.noise_sigma * amplitude
        noise = np.array(stream.gaussians(PATCH_SIZE * PATCH_SIZE),
                         dtype=np.float64).reshape(PATCH_SIZE, PATCH_SIZE)
        grid = grid + scale * noise
    return PeakPatch(intensities=grid.astype(np.float32),
                     truth=PeakPosition(cx, cy))


def synth_dataset(n: int, params: SynthParams | None = None,
                  seed: int = 0) -> list[PeakPatch]:
    """Deterministic synthetic dataset; patch i uses substream i of `seed`."""
    if n < 1:
        raise ValidationError(f"need n >= 1 patches, got {n}")
    params = params or SynthParams()
    params.validate()
    return [synth_patch(Xoshiro256StarStar.substream(seed, i), params)
            for i in range(n)]


def patches_to_arrays(patches: list[PeakPatch]) -> tuple[np.ndarray, np.ndarray]:
    """Stack patches into (n, 1, 11, 11) float32 inputs and (n, 2) truths.

    Truth rows are NaN where a patch has no recorded truth.
    """
    if not patches:
        raise ValidationError("empty patch list")
    inputs = np.stack([p.intensities for p in patches])[:, None, :, :]
    truths = np.full((len(patches), 2), np.nan, dtype=np.float32)
    for i, patch in enumerate(patches):
        if patch.truth is not None:
            truths[i, 0] = patch.truth.x
            truths[i, 1] = patch.truth.y
    return np.ascontiguousarray(inputs, dtype=np.float32), truths


def arrays_to_patches(inputs: np.ndarray, truths: np.ndarray | None = None) -> list[PeakPatch]:
    inputs = np.asarray(inputs, dtype=np.float32)
    if inputs.ndim == 4 and inputs.shape[1] == 1:
        inputs = inputs[:, 0]
    if inputs.ndim != 3 or inputs.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
        raise ValidationError(f"expected (n, {PATCH_SIZE}, {PATCH_SIZE}) intensities, "
                              f"got {inputs.shape}")
    out = []
    for i in range(inputs.shape[0]):
        truth = None
        if truths is not None and not math.isnan(float(truths[i][0])):
            truth = PeakPosition(float(truths[i][0]), float(truths[i][1]))
        out.append(PeakPatch(intensities=inputs[i], truth=truth))
    return out


def write_bpk1(path: Path | str, patches: list[PeakPatch]) -> None:
    inputs, truths = patches_to_arrays(patches)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">I", len(patches)))
        for i in range(len(patches)):
            record = np.concatenate([inputs[i, 0].reshape(-1),
                                     truths[i]]).astype("<f4")
            fh.write(record.tobytes())


def read_bpk1(path: Path | str) -> list[PeakPatch]:
    inputs, truths = read_bpk1_arrays(path)
    return arrays_to_patches(inputs, truths)


def read_bpk1_arrays(path: Path | str, start: int = 0,
                     count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a [start, start+count) slice as (n, 1, 11, 11) and (n, 2) arrays."""
    data = Path(path).read_bytes()
    return decode_bpk1(data, start, count)


def decode_bpk1(data: bytes, start: int = 0,
                count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if data[:4] != MAGIC:
        raise ValidationError("not a BPK1 file (bad magic)")
    (total,) = struct.unpack(">I", data[4:8])
    record_bytes = RECORD_FLOATS * 4
    if len(data) != 8 + total * record_bytes:
        raise ValidationError(f"truncated BPK1 file: {len(data)} bytes for {total} records")
    if count is None:
        count = total - start
    if start < 0 or count < 0 or start + count > total:
        raise ValidationError(f"slice [{start}, {start + count}) outside 0..{total}")
    flat = np.frombuffer(data, dtype="<f4", offset=8 + start * record_bytes,
                         count=count * RECORD_FLOATS).reshape(count, RECORD_FLOATS)
    inputs = flat[:, :PATCH_SIZE * PATCH_SIZE].reshape(count, 1, PATCH_SIZE, PATCH_SIZE)
    truths = flat[:, PATCH_SIZE * PATCH_SIZE:]
    return np.ascontiguousarray(inputs), np.ascontiguousarray(truths)


def encode_bpk1(inputs: np.ndarray, truths: np.ndarray | None = None) -> bytes:
    inputs = np.asarray(inputs, dtype=np.float32).reshape(-1, PATCH_SIZE * PATCH_SIZE)
    n = inputs.shape[0]
    if truths is None:
        truths = np.full((n, 2), np.nan, dtype=np.float32)
    truths = np.asarray(truths, dtype=np.float32).reshape(n, 2)
    body = np.concatenate([inputs, truths], axis=1).astype("<f4")
    return MAGIC + struct.pack(">I", n) + body.tobytes()
