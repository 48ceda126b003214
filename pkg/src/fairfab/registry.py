"""Directory-backed publication registry for models and datasets.

Each entry lives in its own subdirectory (the identifier, URL-quoted):
``record.json`` holds the canonical machine metadata, ``state.json`` the
lifecycle state, and the artifact sits beside them (``artifact.bin`` for
model servables, a ``bag/`` tree for datasets). Withdrawal deletes the
artifact bytes but keeps the metadata as a tombstone. A fresh Registry
over the same root serves identical answers; nothing lives only in RAM.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import re
import shutil
import threading
import urllib.parse
import zipfile
from datetime import datetime, timezone
from pathlib import Path

from .bag import ValidationReport, mint_minid, validate_bag
from .errors import (
    ConflictError,
    GoneError,
    IntegrityError,
    NotFoundError,
    ValidationError,
)
from .metadata import (
    DatasetRecord,
    ModelRecord,
    parse_document,
    render_document,
    to_document,
    validate_record,
)

LOCAL_DOI_PREFIX = "local-doi:10.99999/"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
_WORD = re.compile(r"[a-z0-9]+")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def _report_summary(report: ValidationReport) -> str:
    parts = []
    if report.missing_files:
        parts.append("missing: " + ", ".join(report.missing_files))
    if report.corrupted_files:
        parts.append("corrupted: " + ", ".join(p for p, _, _ in report.corrupted_files))
    if report.extra_files:
        parts.append("unlisted: " + ", ".join(report.extra_files))
    return "; ".join(parts) or "structural failure"


def mint_identifier(document: dict) -> str:
    """Content-derived identifier: hash of the doc with identity fields blanked."""
    blank = dict(document)
    blank["identifier"] = ""
    blank["identifier_type"] = ""
    digest = hashlib.sha256(render_document(blank).encode("utf-8")).hexdigest()
    return LOCAL_DOI_PREFIX + digest[:8]


def zip_directory(root: Path) -> bytes:
    """Deterministic archive of a directory tree (stored, epoch timestamps)."""
    root = Path(root)
    names = sorted(str(p.relative_to(root)).replace(os.sep, "/")
                   for p in root.rglob("*") if p.is_file())
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_STORED) as archive:
        for name in names:
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            archive.writestr(info, (root / name).read_bytes())
    return buffer.getvalue()


class Registry:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._minids: dict[str, str] = {}
        self._rescan()

    # -- storage helpers -----------------------------------------------------

    def _entry_dir(self, identifier: str) -> Path:
        return self.root / urllib.parse.quote(identifier, safe="")

    def _rescan(self) -> None:
        self._minids.clear()
        for child in self.root.iterdir():
            record_path = child / "record.json"
            if not record_path.is_file():
                continue
            doc = parse_document(record_path.read_text(encoding="utf-8"))
            minid = doc.get("minid", "")
            if minid:
                self._minids[minid] = doc["identifier"]

    def _write_json(self, path: Path, text: str) -> None:
        tmp = path.with_suffix(".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)

    def _load_entry(self, identifier: str) -> tuple[dict, dict, Path]:
        entry = self._entry_dir(identifier)
        record_path = entry / "record.json"
        if not record_path.is_file():
            raise NotFoundError(f"no such entry: {identifier}")
        doc = parse_document(record_path.read_text(encoding="utf-8"))
        state = json.loads((entry / "state.json").read_text(encoding="utf-8"))
        return doc, state, entry

    def resolve(self, identifier: str) -> str:
        """Map a minid onto its dataset identifier; pass others through."""
        with self._lock:
            return self._minids.get(identifier, identifier)

    # -- publication ---------------------------------------------------------

    def _admit(self, document: dict) -> dict:
        if not document.get("identifier"):
            document = dict(document)
            document["identifier"] = mint_identifier(document)
            document["identifier_type"] = "local-doi"
        violations = validate_record(document)
        if violations:
            raise ValidationError(
                "metadata rejected: " + "; ".join(str(v) for v in violations))
        return document

    def _reserve(self, document: dict, state: dict) -> Path:
        identifier = document["identifier"]
        entry = self._entry_dir(identifier)
        if entry.exists():
            raise ConflictError(f"identifier already published: {identifier}")
        entry.mkdir(parents=True)
        self._write_json(entry / "record.json", render_document(document))
        self._write_json(entry / "state.json", json.dumps(state, indent=2) + "\n")
        return entry

    def publish_model(self, record: ModelRecord | dict, servable: bytes) -> str:
        document = record if isinstance(record, dict) else to_document(record)
        with self._lock:
            document = self._admit(document)
            if document.get("record_type") != "model":
                raise ValidationError("publish_model needs a model record")
            digest = hashlib.sha256(servable).hexdigest()
            declared = document.get("servable_digest", "")
            if declared and declared != digest:
                raise IntegrityError(
                    f"servable digest mismatch: record declares {declared}, "
                    f"artifact hashes to {digest}")
            if not declared:
                document = dict(document)
                document["servable_digest"] = digest
            state = {"state": "published", "published_at": _now(),
                     "withdrawn_at": None, "artifact_digest": digest,
                     "record_type": "model"}
            entry = self._reserve(document, state)
            (entry / "artifact.bin").write_bytes(servable)
            return document["identifier"]

    def publish_dataset(self, record: DatasetRecord | dict, bag_path: str | Path) -> str:
        document = record if isinstance(record, dict) else to_document(record)
        bag_path = Path(bag_path)
        with self._lock:
            report = validate_bag(bag_path)
            if not report.valid:
                raise ValidationError("bag rejected: " + _report_summary(report))
            minted = mint_minid(bag_path).identifier
            declared = document.get("minid", "")
            if declared and declared != minted:
                raise IntegrityError(
                    f"minid mismatch: record declares {declared}, bag mints {minted}")
            if not declared:
                document = dict(document)
                document["minid"] = minted
            document = self._admit(document)
            if document.get("record_type") != "dataset":
                raise ValidationError("publish_dataset needs a dataset record")
            if minted in self._minids:
                raise ConflictError(f"bag already published under {self._minids[minted]}")
            artifact_digest = hashlib.sha256(zip_directory(bag_path)).hexdigest()
            state = {"state": "published", "published_at": _now(),
                     "withdrawn_at": None, "artifact_digest": artifact_digest,
                     "record_type": "dataset"}
            entry = self._reserve(document, state)
            shutil.copytree(bag_path, entry / "bag")
            self._minids[minted] = document["identifier"]
            return document["identifier"]

    # -- retrieval -----------------------------------------------------------

    def get_metadata(self, identifier: str) -> dict:
        with self._lock:
            identifier = self.resolve(identifier)
            doc, state, _ = self._load_entry(identifier)
            return {"identifier": identifier, "record": doc,
                    "state": state["state"],
                    "published_at": state["published_at"],
                    "withdrawn_at": state["withdrawn_at"],
                    "artifact_digest": state["artifact_digest"]}

    def download_artifact(self, identifier: str) -> bytes:
        with self._lock:
            identifier = self.resolve(identifier)
            doc, state, entry = self._load_entry(identifier)
            if state["state"] == "withdrawn":
                raise GoneError(f"artifact withdrawn: {identifier}")
            if state["record_type"] == "model":
                return (entry / "artifact.bin").read_bytes()
            return zip_directory(entry / "bag")

    def withdraw(self, identifier: str) -> dict:
        """Tombstone the entry: metadata stays, artifact bytes go. Idempotent."""
        with self._lock:
            identifier = self.resolve(identifier)
            doc, state, entry = self._load_entry(identifier)
            if state["state"] != "withdrawn":
                state["state"] = "withdrawn"
                state["withdrawn_at"] = _now()
                self._write_json(entry / "state.json", json.dumps(state, indent=2) + "\n")
                artifact = entry / "artifact.bin"
                if artifact.exists():
                    artifact.unlink()
                bag_dir = entry / "bag"
                if bag_dir.exists():
                    shutil.rmtree(bag_dir)
            return self.get_metadata(identifier)

    def list_entries(self) -> list[str]:
        with self._lock:
            out = []
            for child in sorted(self.root.iterdir()):
                if (child / "record.json").is_file():
                    out.append(urllib.parse.unquote(child.name))
            return out

    # -- discovery -----------------------------------------------------------

    def search(self, query: str) -> list[dict]:
        terms = _tokens(query)
        if not terms:
            return []
        with self._lock:
            hits = []
            for identifier in self.list_entries():
                doc, state, _ = self._load_entry(identifier)
                haystack = _tokens(" ".join(
                    [doc.get("title", ""), doc.get("description", "")]
                    + list(doc.get("keywords", []))))
                score = sum(haystack.count(term) for term in terms)
                if score > 0:
                    hits.append({"identifier": identifier,
                                 "title": doc.get("title", ""),
                                 "record_type": doc.get("record_type", ""),
                                 "state": state["state"],
                                 "score": score})
            hits.sort(key=lambda h: (-h["score"], h["identifier"]))
            return hits
