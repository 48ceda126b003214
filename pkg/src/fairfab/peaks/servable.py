"""Export trained weights as a runnable servable archive.

The archive bundles the runner, the self-contained tinynet and frames
module sources (copied verbatim so the archived forward pass is the same
code path as the library's), the weight blob, and a worked example
(input, expected output) for re-execution checks.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..tasking import frames, sandbox
from . import tinynet
from .patches import SynthParams, patches_to_arrays, synth_dataset

EXAMPLE_SEED = 688_2022
EXAMPLE_COUNT = 8

_RUNNER_SOURCE = '''\
"""Servable entry point: one request frame on stdin, one response frame
on stdout, diagnostics on stderr."""

import sys

import frames
import tinynet


def main() -> int:
    data = sys.stdin.buffer.read()
    try:
        header, tensor = frames.decode_frame(data)
        x = frames.decode_tensor(tensor, header["shape"], header["element_type"])
        weights = tinynet.load_weights("weights.bin")
        out = tinynet.forward(weights, x, header.get("profile", "strict-f32"))
        resp_header, resp_tensor = frames.ok_response(out)
        sys.stdout.buffer.write(frames.encode_frame(resp_header, resp_tensor))
    except Exception as exc:  # report, do not crash: protocol errors are data
        print(f"inference failed: {exc}", file=sys.stderr)
        sys.stdout.buffer.write(frames.encode_frame(
            frames.error_response(f"{type(exc).__name__}: {exc}")))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
'''


def _module_source(module) -> bytes:
    return Path(module.__file__).read_bytes()


def example_batch() -> tuple[np.ndarray, np.ndarray]:
    """The fixed worked-example batch bundled with every export."""
    patches = synth_dataset(EXAMPLE_COUNT, SynthParams(noise_sigma=0.02),
                            seed=EXAMPLE_SEED)
    return patches_to_arrays(patches)


def export_servable(weights: tinynet.TinyNetWeights) -> bytes:
    """Package weights per the servable convention; deterministic bytes."""
    tinynet.check_fingerprint(weights)
    example_x, _ = example_batch()
    example_y = tinynet.forward(weights, example_x, "strict-f32")
    example_io = {
        "element_type": "float32",
        "input_file": "example_input.bin",
        "input_shape": list(example_x.shape),
        "output_file": "example_output.bin",
        "output_shape": list(example_y.shape),
        "profile": "strict-f32",
    }
    manifest = {
        "entry": ["python3", "runner.py"],
        "artifact": "tinynet-servable",
        "weights_file": "weights.bin",
        "weights_format": "tnw1",
        "fingerprint": weights.fingerprint,
        "example": example_io,
    }
    files = {
        "runner.py": _RUNNER_SOURCE.encode(),
        "tinynet.py": _module_source(tinynet),
        "frames.py": _module_source(frames),
        "weights.bin": tinynet.serialize_weights(weights),
        "example_input.bin": frames.encode_tensor(example_x),
        "example_output.bin": frames.encode_tensor(example_y),
        "example_io.json": (json.dumps(example_io, sort_keys=True, indent=2) + "\n").encode(),
    }
    return sandbox.build_servable_archive(files, manifest)


def servable_digest(servable: bytes) -> str:
    return hashlib.sha256(servable).hexdigest()


def run_bundled_example(servable: bytes,
                        profile: str = "strict-f32") -> tuple[sandbox.InferenceResult, bytes]:
    """Re-execute the archived example; returns (result, expected bytes)."""
    manifest = sandbox.read_manifest(servable)
    example = manifest.get("example")
    if not example:
        raise sandbox.ServableExecutionError("archive", "servable bundles no example")
    tensor = sandbox.read_member(servable, example["input_file"])
    expected = sandbox.read_member(servable, example["output_file"])
    header = {
        "kind": "inference",
        "model": manifest.get("fingerprint", ""),
        "element_type": example["element_type"],
        "shape": list(example["input_shape"]),
        "element_count": int(np.prod(example["input_shape"])),
    }
    result = sandbox.execute_servable(servable, header, tensor, profile=profile)
    return result, expected
