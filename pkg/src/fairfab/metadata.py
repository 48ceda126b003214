"""Machine-readable publication metadata for models and datasets.

The schema is a fixed, DataCite-inspired profile so that every check over
it is decidable. The machine format is UTF-8 JSON with sorted keys; the
human format is a self-contained HTML page. Records carry an explicit
``record_type`` ("model" or "dataset") and an (identifier, identifier_type)
pair.

Tensor signatures mark a variable leading batch dimension as ``null`` in
JSON (``None`` in Python); all fixed dimensions are >= 1.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass, field

from .errors import ValidationError

ELEMENT_TYPES = ("float32", "float64")
MODEL_MANDATORY = ("identifier", "title", "authors", "publication_year",
                   "input_signature", "output_signature", "keywords")
DATASET_MANDATORY = ("identifier", "title", "authors", "publication_year", "keywords")
YEAR_RANGE = (1990, 2100)


class MetadataParseError(ValidationError):
    """Document is not parseable at all (distinct from schema violations)."""


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class Author:
    name: str
    contact: str = ""


@dataclass(frozen=True)
class IOSignature:
    element_type: str
    shape: tuple  # leading entry may be None (variable batch)
    semantic_label: str = ""

    def concrete_shape(self, batch: int) -> tuple[int, ...]:
        dims = list(self.shape)
        if dims and dims[0] is None:
            dims[0] = batch
        return tuple(int(d) for d in dims)


@dataclass(frozen=True)
class UQMetricSpec:
    metric: str
    trust_threshold: float
    units: str


@dataclass
class ModelRecord:
    identifier: str
    title: str
    authors: list[Author]
    publication_year: int
    input_signature: IOSignature
    output_signature: IOSignature
    keywords: list[str]
    description: str = ""
    instructions: str = ""
    dependencies: list[tuple[str, str]] = field(default_factory=list)
    training_dataset_id: str = ""
    sample_set_id: str = ""
    uq_metric: UQMetricSpec | None = None
    license: str = ""
    servable_digest: str = ""
    identifier_type: str = ""

    record_type = "model"

    def __post_init__(self):
        if not self.identifier_type:
            self.identifier_type = identifier_type_of(self.identifier)


@dataclass
class DatasetRecord:
    identifier: str
    title: str
    authors: list[Author]
    publication_year: int
    keywords: list[str]
    description: str = ""
    license: str = "CC-BY-4.0"
    format_label: str = ""
    minid: str = ""
    related_identifiers: list[tuple[str, str]] = field(default_factory=list)
    identifier_type: str = ""

    record_type = "dataset"

    def __post_init__(self):
        if not self.identifier_type:
            self.identifier_type = identifier_type_of(self.identifier)


def identifier_type_of(identifier: str) -> str:
    if identifier.startswith("local-doi:"):
        return "local-doi"
    if identifier.startswith("minid:"):
        return "minid"
    return "other"


def _signature_doc(sig: IOSignature) -> dict:
    return {"element_type": sig.element_type,
            "shape": [None if d is None else int(d) for d in sig.shape],
            "semantic_label": sig.semantic_label}


def to_document(record: ModelRecord | DatasetRecord) -> dict:
    """Plain key/value tree for the machine format."""
    doc = {
        "record_type": record.record_type,
        "identifier": record.identifier,
        "identifier_type": record.identifier_type or identifier_type_of(record.identifier),
        "title": record.title,
        "authors": [{"name": a.name, "contact": a.contact} for a in record.authors],
        "publication_year": record.publication_year,
        "keywords": list(record.keywords),
        "description": record.description,
        "license": record.license,
    }
    if isinstance(record, ModelRecord):
        doc.update({
            "input_signature": _signature_doc(record.input_signature),
            "output_signature": _signature_doc(record.output_signature),
            "instructions": record.instructions,
            "dependencies": [{"name": n, "version": v} for n, v in record.dependencies],
            "training_dataset_id": record.training_dataset_id,
            "sample_set_id": record.sample_set_id,
            "servable_digest": record.servable_digest,
        })
        if record.uq_metric is not None:
            doc["uq_metric"] = {"metric": record.uq_metric.metric,
                                "trust_threshold": record.uq_metric.trust_threshold,
                                "units": record.uq_metric.units}
    else:
        doc.update({
            "format_label": record.format_label,
            "minid": record.minid,
            "related_identifiers": [{"relation": r, "identifier": i}
                                    for r, i in record.related_identifiers],
        })
    return doc


def _signature_from(doc: dict) -> IOSignature:
    return IOSignature(element_type=doc["element_type"],
                       shape=tuple(None if d is None else int(d) for d in doc["shape"]),
                       semantic_label=doc.get("semantic_label", ""))


def from_document(doc: dict) -> ModelRecord | DatasetRecord:
    """Reconstruct a record from a validated document tree."""
    violations = validate_record(doc)
    if violations:
        raise ValidationError("; ".join(str(v) for v in violations))
    authors = [Author(a["name"], a.get("contact", "")) for a in doc["authors"]]
    common = dict(identifier=doc["identifier"], title=doc["title"], authors=authors,
                  publication_year=int(doc["publication_year"]),
                  keywords=list(doc["keywords"]),
                  description=doc.get("description", ""),
                  identifier_type=doc.get("identifier_type", ""))
    if doc["record_type"] == "model":
        uq = doc.get("uq_metric")
        return ModelRecord(
            input_signature=_signature_from(doc["input_signature"]),
            output_signature=_signature_from(doc["output_signature"]),
            instructions=doc.get("instructions", ""),
            dependencies=[(d["name"], d["version"]) for d in doc.get("dependencies", [])],
            training_dataset_id=doc.get("training_dataset_id", ""),
            sample_set_id=doc.get("sample_set_id", ""),
            uq_metric=None if uq is None else UQMetricSpec(
                uq["metric"], float(uq["trust_threshold"]), uq["units"]),
            license=doc.get("license", ""),
            servable_digest=doc.get("servable_digest", ""),
            **common)
    return DatasetRecord(
        license=doc.get("license", "CC-BY-4.0"),
        format_label=doc.get("format_label", ""),
        minid=doc.get("minid", ""),
        related_identifiers=[(r["relation"], r["identifier"])
                             for r in doc.get("related_identifiers", [])],
        **common)


def parse_document(text: str | bytes) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MetadataParseError(f"not a parseable document: {exc}") from exc
    if not isinstance(doc, dict):
        raise MetadataParseError("document root must be a key/value tree")
    return doc


def _check_signature(doc, prefix: str, out: list[Violation]) -> None:
    if not isinstance(doc, dict):
        out.append(Violation(prefix, "signature must be a key/value tree"))
        return
    etype = doc.get("element_type")
    if etype not in ELEMENT_TYPES:
        out.append(Violation(f"{prefix}.element_type",
                             f"must be one of {ELEMENT_TYPES}, got {etype!r}"))
    shape = doc.get("shape")
    if not isinstance(shape, list) or not shape:
        out.append(Violation(f"{prefix}.shape", "must be a non-empty list"))
        return
    for i, dim in enumerate(shape):
        if dim is None:
            if i != 0:
                out.append(Violation(f"{prefix}.shape[{i}]",
                                     "only the leading dimension may be variable"))
        elif not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            out.append(Violation(f"{prefix}.shape[{i}]",
                                 f"fixed dimensions must be integers >= 1, got {dim!r}"))


def validate_record(document: dict | str | bytes) -> list[Violation]:
    """All schema violations of a metadata document; empty means valid.

    Total over arbitrary key/value trees: malformed values produce
    violations, never exceptions. Strings and bytes are parsed first and
    may raise MetadataParseError.
    """
    if isinstance(document, (str, bytes)):
        document = parse_document(document)
    out: list[Violation] = []
    if not isinstance(document, dict):
        return [Violation("document", "root must be a key/value tree")]

    record_type = document.get("record_type")
    if record_type not in ("model", "dataset"):
        out.append(Violation("record_type", "must be 'model' or 'dataset'"))
        record_type = "model"

    mandatory = MODEL_MANDATORY if record_type == "model" else DATASET_MANDATORY
    for name in mandatory:
        value = document.get(name)
        if value is None or value == "" or value == []:
            out.append(Violation(name, "mandatory field is missing or empty"))

    if not isinstance(document.get("identifier", ""), str):
        out.append(Violation("identifier", "must be a string"))
    if not isinstance(document.get("title", ""), str):
        out.append(Violation("title", "must be a string"))

    authors = document.get("authors")
    if isinstance(authors, list):
        for i, author in enumerate(authors):
            if not isinstance(author, dict) or not isinstance(author.get("name"), str) \
                    or not author.get("name"):
                out.append(Violation(f"authors[{i}]", "author needs a non-empty name"))
    elif authors is not None:
        out.append(Violation("authors", "must be a list of authors"))

    year = document.get("publication_year")
    if year is not None:
        if not isinstance(year, int) or isinstance(year, bool) \
                or not (YEAR_RANGE[0] <= year <= YEAR_RANGE[1]):
            out.append(Violation("publication_year",
                                 f"must be a calendar year in {YEAR_RANGE[0]}..{YEAR_RANGE[1]}"))

    keywords = document.get("keywords")
    if keywords is not None and (not isinstance(keywords, list)
                                 or any(not isinstance(k, str) or not k for k in keywords)):
        out.append(Violation("keywords", "must be a list of non-empty strings"))

    if record_type == "model":
        for key in ("input_signature", "output_signature"):
            if document.get(key) is not None:
                _check_signature(document[key], key, out)
        deps = document.get("dependencies")
        if isinstance(deps, list):
            for i, dep in enumerate(deps):
                if not isinstance(dep, dict) or not dep.get("name"):
                    out.append(Violation(f"dependencies[{i}]", "dependency needs a name"))
                elif not isinstance(dep.get("version"), str) or not dep.get("version"):
                    out.append(Violation(f"dependencies[{i}].version",
                                         "dependency version must be non-empty"))
        elif deps is not None:
            out.append(Violation("dependencies", "must be a list"))
        uq = document.get("uq_metric")
        if uq is not None:
            if not isinstance(uq, dict) or not uq.get("metric") \
                    or not isinstance(uq.get("trust_threshold"), (int, float)) \
                    or isinstance(uq.get("trust_threshold"), bool):
                out.append(Violation("uq_metric",
                                     "needs a metric name and a numeric trust_threshold"))
    else:
        related = document.get("related_identifiers")
        if related is not None and not isinstance(related, list):
            out.append(Violation("related_identifiers", "must be a list"))
        elif isinstance(related, list):
            for i, rel in enumerate(related):
                if not isinstance(rel, dict) or "relation" not in rel or "identifier" not in rel:
                    out.append(Violation(f"related_identifiers[{i}]",
                                         "needs relation and identifier"))
    return out


def render_record(record: ModelRecord | DatasetRecord, format: str = "machine") -> str:
    """Serialize a valid record: 'machine' (JSON, sorted keys) or 'human' (HTML)."""
    doc = to_document(record)
    violations = validate_record(doc)
    if violations:
        raise ValidationError("refusing to render invalid record: "
                              + "; ".join(str(v) for v in violations))
    if format == "machine":
        return render_document(doc)
    if format == "human":
        return _render_html(doc)
    raise ValidationError(f"unknown render format: {format!r}")


def render_document(doc: dict) -> str:
    """Canonical machine serialization of any document tree."""
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def _html_value(value) -> str:
    if isinstance(value, (dict, list)):
        return "<code>" + html.escape(json.dumps(value, sort_keys=True)) + "</code>"
    return html.escape(str(value))


def _render_html(doc: dict) -> str:
    rows = []
    for key in sorted(doc):
        rows.append(f"    <dt>{html.escape(key)}</dt><dd>{_html_value(doc[key])}</dd>")
    authors = ", ".join(html.escape(a.get("name", "")) for a in doc.get("authors", []))
    return (
        "<!DOCTYPE html>\n"
        "<html><head><meta charset=\"utf-8\">"
        f"<title>{html.escape(doc.get('title', ''))}</title></head>\n"
        "<body>\n"
        f"  <h1>{html.escape(doc.get('title', ''))}</h1>\n"
        f"  <p>{html.escape(doc.get('identifier', ''))}</p>\n"
        f"  <p>{authors}</p>\n"
        "  <dl>\n" + "\n".join(rows) + "\n  </dl>\n"
        "</body></html>\n")


def extract_signature(record: ModelRecord) -> tuple[IOSignature, IOSignature]:
    """The (input, output) signatures the execution fabric enforces."""
    violations = validate_record(to_document(record))
    if violations:
        raise ValidationError("invalid record: " + "; ".join(str(v) for v in violations))
    return record.input_signature, record.output_signature
