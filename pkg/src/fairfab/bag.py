"""Checksummed dataset bags with content-derived persistent identifiers.

On-disk layout (BagIt 1.0 structural subset, LF line endings, UTF-8 paths):

    <bag>/bagit.txt             "BagIt-Version: 1.0" + "Tag-File-Character-Encoding: UTF-8"
    <bag>/bag-info.txt          "Key: value" metadata lines
    <bag>/manifest-sha256.txt   "<hex digest><2 spaces><data/...>" sorted by path, byte-wise
    <bag>/fetch.txt             optional; "url<TAB>length<TAB>data/..." per remote entry
    <bag>/data/...              payload copy

sha512 manifests are accepted on read; bags are always written with sha256.
Remote (fetch.txt) targets appear in the manifest with their declared
digests and are exempt from local-presence checks until fetched.

The minid of a bag is derived from content only: sha256 over the canonical
manifest bytes (recomputed sha256 per local payload file, declared digest
for unfetched remote targets, sorted by path), truncated to the top 60 bits
and base32-encoded as 12 lowercase characters with prefix ``minid:``.
"""

from __future__ import annotations

import hashlib
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, ConflictError, IntegrityError, ValidationError

SUPPORTED_ALGORITHMS = ("sha256", "sha512")
_BAGIT_TXT = "BagIt-Version: 1.0\nTag-File-Character-Encoding: UTF-8\n"
_BASE32_ALPHABET = "abcdefghijklmnopqrstuvwxyz234567"
_READ_CHUNK = 1 << 16


class BagStructureError(ValidationError):
    """Path is not a structurally complete bag (distinct from failed validation)."""


@dataclass
class Bag:
    """A bag directory plus its parsed manifest state."""

    root_path: Path
    checksum_algorithm: str = "sha256"
    payload_entries: list[tuple[str, int, str]] = field(default_factory=list)
    remote_entries: list[tuple[str, int, str, str]] = field(default_factory=list)
    bag_info: dict[str, str] = field(default_factory=dict)

    def payload_paths(self) -> set[str]:
        return {path for path, _, _ in self.payload_entries}

    def remote_targets(self) -> set[str]:
        return {target for _, _, _, target in self.remote_entries}


@dataclass
class ValidationReport:
    valid: bool
    missing_files: list[str] = field(default_factory=list)
    corrupted_files: list[tuple[str, str, str]] = field(default_factory=list)
    extra_files: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Minid:
    identifier: str
    source_digest: str


def _hash_file(path: Path, algorithm: str) -> tuple[str, int]:
    digest = hashlib.new(algorithm)
    size = 0
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_READ_CHUNK)
            if not chunk:
                break
            size += len(chunk)
            digest.update(chunk)
    return digest.hexdigest(), size


def _check_payload_path(rel: str) -> str:
    if not rel.startswith("data/"):
        raise ValidationError(f"payload path must start with data/: {rel!r}")
    parts = rel.split("/")
    if ".." in parts or "" in parts[:-1] or rel.endswith("/"):
        raise ValidationError(f"unsafe payload path: {rel!r}")
    return rel


def _walk_payload(source_dir: Path) -> list[Path]:
    files = []
    for root, dirnames, filenames in os.walk(source_dir):
        root_path = Path(root)
        for name in dirnames:
            if (root_path / name).is_symlink():
                raise ValidationError(f"symbolic link in source tree: {root_path / name}")
        for name in filenames:
            path = root_path / name
            if path.is_symlink():
                raise ValidationError(f"symbolic link in source tree: {path}")
            files.append(path)
    return files


def _manifest_lines(entries: list[tuple[str, str]]) -> bytes:
    # entries: (relative path, digest); sorted ascending byte-wise by path
    lines = [f"{digest}  {path}\n" for path, digest in sorted(entries, key=lambda e: e[0].encode())]
    return "".join(lines).encode("utf-8")


def create_bag(source_dir: Path | str, dest_dir: Path | str,
               algorithm: str = "sha256",
               info: dict[str, str] | None = None) -> Bag:
    """Package `source_dir` into a new bag directory at `dest_dir`.

    The payload is copied below ``data/`` preserving relative paths; the
    manifest is written sorted and LF-terminated so it is byte-identical
    across runs on the same tree.
    """
    if not algorithm:
        raise ConfigurationError("checksum algorithm must be non-empty")
    if algorithm not in SUPPORTED_ALGORITHMS:
        raise ConfigurationError(f"unsupported checksum algorithm: {algorithm!r}")
    source_dir = Path(source_dir)
    dest_dir = Path(dest_dir)
    if not source_dir.is_dir():
        raise IOError(f"source directory not readable: {source_dir}")
    if dest_dir.exists() and any(dest_dir.iterdir()):
        raise ConflictError(f"destination is not empty: {dest_dir}")

    payload_files = _walk_payload(source_dir)
    data_dir = dest_dir / "data"
    data_dir.mkdir(parents=True, exist_ok=True)

    entries: list[tuple[str, int, str]] = []
    for path in payload_files:
        rel = path.relative_to(source_dir).as_posix()
        target_rel = _check_payload_path(f"data/{rel}")
        target = dest_dir / target_rel
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(path, target)
        digest, size = _hash_file(target, algorithm)
        entries.append((target_rel, size, digest))

    (dest_dir / "bagit.txt").write_bytes(_BAGIT_TXT.encode("utf-8"))
    bag_info = dict(info or {})
    info_lines = "".join(f"{key}: {value}\n" for key, value in bag_info.items())
    (dest_dir / "bag-info.txt").write_bytes(info_lines.encode("utf-8"))
    manifest = _manifest_lines([(path, digest) for path, _, digest in entries])
    (dest_dir / f"manifest-{algorithm}.txt").write_bytes(manifest)

    return Bag(root_path=dest_dir, checksum_algorithm=algorithm,
               payload_entries=sorted(entries), bag_info=bag_info)


def _find_manifest(bag_path: Path) -> tuple[str, Path]:
    for algorithm in SUPPORTED_ALGORITHMS:
        candidate = bag_path / f"manifest-{algorithm}.txt"
        if candidate.is_file():
            return algorithm, candidate
    raise BagStructureError(f"no manifest file in {bag_path}")


def _parse_manifest(manifest_path: Path, algorithm: str) -> list[tuple[str, str]]:
    expected_len = hashlib.new(algorithm).digest_size * 2
    entries = []
    for lineno, raw in enumerate(manifest_path.read_text("utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        digest, sep, path = raw.partition("  ")
        if not sep or not path:
            raise BagStructureError(f"malformed manifest line {lineno}: {raw!r}")
        digest = digest.lower()
        if len(digest) != expected_len or any(c not in "0123456789abcdef" for c in digest):
            raise BagStructureError(f"bad digest on manifest line {lineno}: {raw!r}")
        try:
            _check_payload_path(path)
        except ValidationError as exc:
            raise BagStructureError(str(exc)) from exc
        entries.append((path, digest))
    return entries


def _parse_fetch(bag_path: Path) -> list[tuple[str, int, str, str]]:
    fetch_path = bag_path / "fetch.txt"
    if not fetch_path.is_file():
        return []
    entries = []
    for lineno, raw in enumerate(fetch_path.read_text("utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 3:
            raise BagStructureError(f"malformed fetch.txt line {lineno}: {raw!r}")
        url, length, target = fields
        entries.append((url, int(length), "", target))
    return entries


def load_bag(bag_path: Path | str) -> Bag:
    """Parse an existing bag directory without verifying checksums."""
    bag_path = Path(bag_path)
    if not (bag_path / "bagit.txt").is_file():
        raise BagStructureError(f"missing bagit.txt in {bag_path}")
    algorithm, manifest_path = _find_manifest(bag_path)
    manifest = _parse_manifest(manifest_path, algorithm)
    remotes = _parse_fetch(bag_path)
    remote_digests = dict()
    remote_targets = {target for _, _, _, target in remotes}
    payload = []
    for path, digest in manifest:
        if path in remote_targets:
            remote_digests[path] = digest
        else:
            payload.append((path, -1, digest))
    remotes = [(url, length, remote_digests.get(target, ""), target)
               for url, length, _, target in remotes]
    info = {}
    info_path = bag_path / "bag-info.txt"
    if info_path.is_file():
        for raw in info_path.read_text("utf-8").splitlines():
            key, sep, value = raw.partition(": ")
            if sep:
                info[key] = value
    return Bag(root_path=bag_path, checksum_algorithm=algorithm,
               payload_entries=payload, remote_entries=remotes, bag_info=info)


def validate_bag(bag_path: Path | str) -> ValidationReport:
    """Verify every manifest entry against the payload on disk (read-only).

    Remote (fetch.txt) targets that are absent locally are not missing; if
    present locally they are digest-checked like any payload file.
    """
    bag_path = Path(bag_path)
    bag = load_bag(bag_path)
    algorithm, manifest_path = _find_manifest(bag_path)
    manifest = dict(_parse_manifest(manifest_path, algorithm))
    remote_targets = bag.remote_targets()

    missing: list[str] = []
    corrupted: list[tuple[str, str, str]] = []
    for rel, expected in sorted(manifest.items()):
        path = bag_path / rel
        if not path.is_file():
            if rel not in remote_targets:
                missing.append(rel)
            continue
        actual, _ = _hash_file(path, algorithm)
        if actual != expected:
            corrupted.append((rel, expected, actual))

    extra: list[str] = []
    data_dir = bag_path / "data"
    if data_dir.is_dir():
        for root, _, filenames in os.walk(data_dir):
            for name in filenames:
                rel = (Path(root) / name).relative_to(bag_path).as_posix()
                if rel not in manifest:
                    extra.append(rel)
    extra.sort()

    valid = not missing and not corrupted and not extra
    return ValidationReport(valid=valid, missing_files=missing,
                            corrupted_files=corrupted, extra_files=extra)


def _canonical_manifest_bytes(bag_path: Path) -> bytes:
    # Recompute sha256 for local payload files; keep declared digests for
    # unfetched remote targets. Independent of bag-info, timestamps, and
    # the bag's own manifest algorithm.
    bag = load_bag(bag_path)
    remote_targets = bag.remote_targets()
    entries: list[tuple[str, str]] = []
    seen = set()
    data_dir = bag_path / "data"
    if data_dir.is_dir():
        for root, _, filenames in os.walk(data_dir):
            for name in filenames:
                path = Path(root) / name
                rel = path.relative_to(bag_path).as_posix()
                digest, _ = _hash_file(path, "sha256")
                entries.append((rel, digest))
                seen.add(rel)
    for url, _, digest, target in bag.remote_entries:
        if target not in seen:
            entries.append((target, digest))
    return _manifest_lines(entries)


def _base32_60bit(value: int) -> str:
    chars = []
    for shift in range(55, -1, -5):
        chars.append(_BASE32_ALPHABET[(value >> shift) & 0x1F])
    return "".join(chars)


def mint_minid(bag_path: Path | str) -> Minid:
    """Mint the content-derived persistent identifier of a valid bag."""
    bag_path = Path(bag_path)
    report = validate_bag(bag_path)
    if not report.valid:
        raise IntegrityError(
            f"refusing to mint for invalid bag {bag_path}: "
            f"missing={report.missing_files} corrupted={[c[0] for c in report.corrupted_files]} "
            f"extra={report.extra_files}")
    digest = hashlib.sha256(_canonical_manifest_bytes(bag_path)).hexdigest()
    top60 = int(digest[:16], 16) >> 4
    return Minid(identifier=f"minid:{_base32_60bit(top60)}", source_digest=digest)


def add_remote_entry(bag_path: Path | str, url: str, length: int,
                     digest: str, target: str) -> Bag:
    """Record a remote payload element: fetch.txt line plus manifest entry."""
    bag_path = Path(bag_path)
    bag = load_bag(bag_path)
    target = _check_payload_path(target)
    if target in bag.payload_paths() or target in bag.remote_targets():
        raise ConflictError(f"target already present in bag: {target}")
    digest = digest.lower()
    expected_len = hashlib.new(bag.checksum_algorithm).digest_size * 2
    if len(digest) != expected_len or any(c not in "0123456789abcdef" for c in digest):
        raise ValidationError(f"digest is not {bag.checksum_algorithm} hex: {digest!r}")
    if "\t" in url or "\n" in url:
        raise ValidationError("url must not contain tabs or newlines")

    manifest_path = bag_path / f"manifest-{bag.checksum_algorithm}.txt"
    entries = _parse_manifest(manifest_path, bag.checksum_algorithm)
    entries.append((target, digest))
    with open(bag_path / "fetch.txt", "a", encoding="utf-8", newline="") as fh:
        fh.write(f"{url}\t{length}\t{target}\n")
    manifest_path.write_bytes(_manifest_lines(entries))
    return load_bag(bag_path)
