"""Servable packaging and sandboxed subprocess execution.

A servable is a deterministic ZIP archive holding ``manifest.json`` (entry
command + protocol version) and the executable payload. Execution extracts
the archive into a private scratch directory, launches the entry command
with a cleared environment (allowlist below), feeds one request frame on
stdin, and reads one response frame from stdout, bounded by a wall-clock
timeout. Diagnostics arrive on stderr.

Network isolation is by construction rather than enforcement: servables
receive no credentials or environment, their only I/O channels are the
frame pipes and the scratch directory, and the bundled runners never open
sockets. Privileged namespace isolation is out of scope at desk scale.
"""

from __future__ import annotations

import io
import json
import os
import subprocess
import sys
import tempfile
import zipfile
from dataclasses import dataclass
from pathlib import Path

from ..errors import FabricError, ValidationError
from . import frames

DEFAULT_TIMEOUT_S = 120.0
ENV_ALLOWLIST = (
    "PATH", "LANG", "LC_ALL", "LC_CTYPE", "TZ",
    "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS",
)
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
MANIFEST_NAME = "manifest.json"


class ServableExecutionError(FabricError):
    """Servable run failed; `kind` is exit | timeout | protocol | error | archive."""

    def __init__(self, kind: str, diagnostics: str):
        super().__init__(f"failed({kind}): {diagnostics}")
        self.kind = kind
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class InferenceResult:
    header: dict
    tensor: bytes
    payload: bytes  # full response frame payload (header block + tensor bytes)


def _check_archive_name(name: str) -> str:
    parts = name.split("/")
    if name.startswith("/") or ".." in parts or "" in parts or "\\" in name:
        raise ValidationError(f"unsafe archive member name: {name!r}")
    return name


def build_servable_archive(files: dict[str, bytes], manifest: dict) -> bytes:
    """Deterministic ZIP: stored entries, fixed timestamps, sorted names."""
    if "entry" not in manifest or not isinstance(manifest["entry"], list):
        raise ValidationError("manifest needs an `entry` command list")
    manifest = {"protocol_version": frames.PROTOCOL_VERSION, **manifest}
    members = dict(files)
    members[MANIFEST_NAME] = (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode()
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(members):
            info = zipfile.ZipInfo(_check_archive_name(name), date_time=_ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            archive.writestr(info, members[name])
    return buffer.getvalue()


def read_manifest(servable: bytes) -> dict:
    try:
        with zipfile.ZipFile(io.BytesIO(servable)) as archive:
            with archive.open(MANIFEST_NAME) as fh:
                manifest = json.load(fh)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise ServableExecutionError("archive", f"unreadable servable: {exc}") from exc
    if manifest.get("protocol_version") != frames.PROTOCOL_VERSION:
        raise ServableExecutionError(
            "archive", f"unsupported protocol version: {manifest.get('protocol_version')}")
    return manifest


def read_member(servable: bytes, name: str) -> bytes:
    try:
        with zipfile.ZipFile(io.BytesIO(servable)) as archive:
            with archive.open(name) as fh:
                return fh.read()
    except (zipfile.BadZipFile, KeyError) as exc:
        raise ServableExecutionError("archive", f"missing member {name!r}") from exc


def extract_archive(servable: bytes, dest: Path) -> None:
    try:
        with zipfile.ZipFile(io.BytesIO(servable)) as archive:
            for name in archive.namelist():
                _check_archive_name(name)
                target = dest / name
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(archive.read(name))
    except zipfile.BadZipFile as exc:
        raise ServableExecutionError("archive", f"unreadable servable: {exc}") from exc


def _sandbox_env(scratch: str) -> dict:
    env = {key: os.environ[key] for key in ENV_ALLOWLIST if key in os.environ}
    env["HOME"] = scratch
    env["TMPDIR"] = scratch
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    env["PYTHONIOENCODING"] = "utf-8"
    return env


def _entry_argv(manifest: dict) -> list[str]:
    argv = [str(part) for part in manifest["entry"]]
    if not argv:
        raise ServableExecutionError("archive", "empty entry command")
    # Archives name a generic interpreter; resolve it to the running one so
    # execution does not depend on the sandbox PATH.
    if argv[0] in ("python", "python3"):
        argv[0] = sys.executable
    return argv


def _tail(text: bytes, limit: int = 2000) -> str:
    return text[-limit:].decode("utf-8", errors="replace")


def execute_servable(servable: bytes, header: dict, tensor: bytes,
                     profile: str = "strict-f32",
                     timeout: float = DEFAULT_TIMEOUT_S) -> InferenceResult:
    """Run one request through the servable in a sandboxed subprocess."""
    manifest = read_manifest(servable)
    request = dict(header)
    request.setdefault("protocol_version", frames.PROTOCOL_VERSION)
    request["profile"] = profile
    declared = request.get("element_count")
    if declared is not None and "element_type" in request:
        expected = declared * frames.ELEMENT_SIZES.get(request["element_type"], 0)
        if expected != len(tensor):
            raise ValidationError(
                f"element_count {declared} does not match {len(tensor)} tensor bytes")
    frame = frames.encode_frame(request, tensor)

    with tempfile.TemporaryDirectory(prefix="fairfab-sbx-") as scratch:
        extract_archive(servable, Path(scratch))
        try:
            proc = subprocess.run(
                _entry_argv(manifest), input=frame, capture_output=True,
                cwd=scratch, env=_sandbox_env(scratch), timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            raise ServableExecutionError(
                "timeout", f"no response within {timeout}s; stderr: "
                f"{_tail(exc.stderr or b'')}") from exc
        except OSError as exc:
            raise ServableExecutionError("exit", f"could not launch entry: {exc}") from exc

    if proc.returncode != 0:
        raise ServableExecutionError(
            "exit", f"exit code {proc.returncode}; stderr: {_tail(proc.stderr)}")
    try:
        resp_header, resp_tensor = frames.decode_frame(proc.stdout)
    except frames.FrameProtocolError as exc:
        raise ServableExecutionError(
            "protocol", f"{exc}; stderr: {_tail(proc.stderr)}") from exc
    if resp_header.get("status") != "ok":
        raise ServableExecutionError(
            "error", str(resp_header.get("detail", "servable reported an error")))
    if "shape" in resp_header and "element_type" in resp_header:
        frames.decode_tensor(resp_tensor, resp_header["shape"],
                             resp_header["element_type"])  # count invariant
    return InferenceResult(header=resp_header, tensor=resp_tensor,
                           payload=proc.stdout[4:])
