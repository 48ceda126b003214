"""Automated Pass/Fail grading of a published model against the four
FAIR propositions.

Each proposition is a named check made of sub-checks; a check passes iff
all of its sub-checks pass, and the report passes iff all four checks
do. Failures are results with evidence strings, never exceptions, so a
report is always produced for a resolvable identifier. Checks are
read-only apart from ephemeral smoke tasks, which carry a marker so task
accounting can filter them out.

"Disparate hardware architectures" is simulated by distinct numeric
execution profiles; the interoperable check says so in its evidence.
"""

from __future__ import annotations

import hashlib
import io
import time
import zipfile
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import FabricError, GoneError
from .metadata import (
    Author,
    IOSignature,
    ModelRecord,
    UQMetricSpec,
    from_document,
    parse_document,
    render_document,
    render_record,
    to_document,
    validate_record,
)
from .tasking import frames
from .uq import consistency_check

SMOKE_MARKER = "faircheck-smoke"
TOMBSTONE_PROBE_TITLE = "Tombstone probe fixture"
PRINCIPLES = ("findable", "accessible", "interoperable", "reusable")

DEFAULT_TASK_TIMEOUT_S = 60.0
_POLL_INTERVAL_S = 0.02


@dataclass(frozen=True)
class SubCheck:
    name: str
    passed: bool
    evidence: str

    def to_document(self) -> dict:
        return {"name": self.name, "passed": self.passed, "evidence": self.evidence}


@dataclass(frozen=True)
class CheckResult:
    principle: str
    passed: bool
    sub_checks: tuple[SubCheck, ...]

    def to_document(self) -> dict:
        return {"principle": self.principle, "passed": self.passed,
                "sub_checks": [s.to_document() for s in self.sub_checks]}

    def sub(self, name: str) -> SubCheck:
        for sub_check in self.sub_checks:
            if sub_check.name == name:
                return sub_check
        raise KeyError(name)


@dataclass(frozen=True)
class FairReport:
    model_identifier: str
    checks: tuple[CheckResult, ...]
    overall: bool
    generated_at: str

    def to_document(self) -> dict:
        return {"model_identifier": self.model_identifier,
                "checks": [c.to_document() for c in self.checks],
                "overall": "PASS" if self.overall else "FAIL",
                "generated_at": self.generated_at}

    def render_machine(self) -> str:
        return render_document(self.to_document())

    def check(self, principle: str) -> CheckResult:
        for check in self.checks:
            if check.principle == principle:
                return check
        raise KeyError(principle)

    def summary_lines(self) -> list[str]:
        lines = [f"FAIR report for {self.model_identifier}"]
        for check in self.checks:
            flag = "PASS" if check.passed else "FAIL"
            lines.append(f"  {check.principle:<14} {flag}")
            for sub_check in check.sub_checks:
                mark = "+" if sub_check.passed else "-"
                lines.append(f"    {mark} {sub_check.name}: {sub_check.evidence}")
        lines.append(f"FAIR overall: {'PASS' if self.overall else 'FAIL'}")
        return lines


def _result(principle: str, subs: list[SubCheck]) -> CheckResult:
    return CheckResult(principle=principle, passed=all(s.passed for s in subs),
                       sub_checks=tuple(subs))


def _unresolved(principle: str, names: list[str], detail: str) -> CheckResult:
    return _result(principle, [SubCheck(n, False, detail) for n in names])


def _record_of(meta: dict):
    try:
        return from_document(meta["record"])
    except Exception:
        return None


# -- findable -----------------------------------------------------------------

_FINDABLE_SUBS = ["identifier_resolves", "metadata_valid", "signatures_present",
                  "dependencies_versioned", "instructions_present",
                  "sample_set_resolves"]


def _signature_text(sig) -> str | None:
    if not isinstance(sig, dict) or not sig.get("element_type") or not sig.get("shape"):
        return None
    return f"{sig['element_type']} {list(sig['shape'])}"


def check_findable(identifier: str, registry) -> CheckResult:
    """Facet checks read the raw document so that records which fail the
    schema check still get precise per-facet evidence."""
    try:
        meta = registry.get_metadata(identifier)
    except FabricError as exc:
        return _unresolved("findable", _FINDABLE_SUBS,
                           f"identifier did not resolve: {exc}")
    doc = meta["record"]
    subs = [SubCheck("identifier_resolves", True,
                     f"{doc.get('identifier', identifier)} "
                     f"({doc.get('identifier_type', 'unknown')})")]

    violations = validate_record(doc)
    subs.append(SubCheck("metadata_valid", not violations,
                         "zero violations" if not violations
                         else "; ".join(str(v) for v in violations)))

    if doc.get("record_type") != "model":
        detail = "record is not a model"
        for name in _FINDABLE_SUBS[2:]:
            subs.append(SubCheck(name, False, detail))
        return _result("findable", subs)

    in_text = _signature_text(doc.get("input_signature"))
    out_text = _signature_text(doc.get("output_signature"))
    subs.append(SubCheck("signatures_present", bool(in_text and out_text),
                         f"input {in_text}; output {out_text}"
                         if in_text and out_text
                         else "input/output signatures missing or incomplete"))

    deps = [(str(d.get("name", "")), str(d.get("version", "")))
            for d in doc.get("dependencies") or [] if isinstance(d, dict)]
    unversioned = [name for name, version in deps if not version]
    if not deps:
        subs.append(SubCheck("dependencies_versioned", False,
                             "no dependencies declared"))
    else:
        subs.append(SubCheck(
            "dependencies_versioned", not unversioned,
            ", ".join(f"{n} {v}" for n, v in deps) if not unversioned
            else "missing versions for: " + ", ".join(unversioned)))

    instructions = str(doc.get("instructions") or "")
    subs.append(SubCheck("instructions_present", bool(instructions.strip()),
                         f"{len(instructions)} chars" if instructions.strip()
                         else "no usage instructions"))

    sample_id = str(doc.get("sample_set_id") or "")
    if not sample_id:
        subs.append(SubCheck("sample_set_resolves", False,
                             "record names no sample set"))
    else:
        try:
            sample_meta = registry.get_metadata(sample_id)
        except FabricError as exc:
            subs.append(SubCheck("sample_set_resolves", False,
                                 f"{sample_id}: {exc}"))
        else:
            published = sample_meta["state"] == "published"
            subs.append(SubCheck(
                "sample_set_resolves", published,
                f"{sample_id} resolves, state={sample_meta['state']}"
                + ("" if published else " (payload no longer obtainable)")))
    return _result("findable", subs)


# -- accessible ---------------------------------------------------------------


def _servable_blob(registry, identifier: str, meta: dict) -> bytes:
    blob = registry.download_artifact(identifier)
    declared = meta["record"].get("servable_digest", "")
    actual = hashlib.sha256(blob).hexdigest()
    if declared and declared != actual:
        raise FabricError(f"servable digest mismatch: declared {declared}, "
                          f"downloaded {actual}")
    return blob


def _example_request(blob: bytes) -> dict:
    """Inline input_reference built from the servable's bundled example."""
    from .tasking.sandbox import read_manifest, read_member
    import base64

    manifest = read_manifest(blob)
    example = manifest.get("example")
    if not example:
        raise FabricError("servable bundles no worked example")
    tensor = read_member(blob, example["input_file"])
    return {"kind": "inline", "element_type": example["element_type"],
            "shape": list(example["input_shape"]),
            "data_b64": base64.b64encode(tensor).decode("ascii")}


def _await_task(broker, task_id: str, timeout_s: float) -> dict:
    deadline = time.monotonic() + timeout_s
    while True:
        view = broker.poll_task(task_id)
        if view["status"] in ("completed", "failed"):
            return view
        if time.monotonic() >= deadline:
            return view
        time.sleep(_POLL_INTERVAL_S)


def _online_endpoints(broker, endpoints=None) -> list[dict]:
    views = endpoints if endpoints is not None else broker.list_endpoints()
    return [v for v in views if v.get("state") == "online"]


def check_accessible(identifier: str, registry, broker,
                     timeout_s: float = DEFAULT_TASK_TIMEOUT_S) -> CheckResult:
    names = ["artifact_download_digest", "smoke_inference",
             "tombstone_metadata_retrievable"]
    try:
        meta = registry.get_metadata(identifier)
    except FabricError as exc:
        return _unresolved("accessible", names, f"identifier did not resolve: {exc}")

    subs = []
    blob = None
    try:
        blob = _servable_blob(registry, identifier, meta)
    except FabricError as exc:
        subs.append(SubCheck("artifact_download_digest", False, str(exc)))
    else:
        subs.append(SubCheck("artifact_download_digest", True,
                             f"sha256 {hashlib.sha256(blob).hexdigest()[:16]}.. matches"))

    online = _online_endpoints(broker)
    if not online:
        subs.append(SubCheck("smoke_inference", False, "no endpoint online"))
    elif blob is None:
        subs.append(SubCheck("smoke_inference", False,
                             "artifact unavailable; no smoke input"))
    else:
        try:
            reference = _example_request(blob)
            task_id = broker.submit_task(identifier, reference, marker=SMOKE_MARKER)
            view = _await_task(broker, task_id, timeout_s)
        except FabricError as exc:
            subs.append(SubCheck("smoke_inference", False, f"smoke task refused: {exc}"))
        else:
            if view["status"] == "completed":
                subs.append(SubCheck("smoke_inference", True,
                                     f"{view['task_id']} completed, result "
                                     f"{view['result_digest'][:16]}.."))
            else:
                subs.append(SubCheck("smoke_inference", False,
                                     f"{view['task_id']} {view['status']}: "
                                     f"{view.get('error_detail') or 'timed out'}"))

    subs.append(_tombstone_probe(registry, identifier))
    return _result("accessible", subs)


def _tombstone_probe(registry, subject: str) -> SubCheck:
    name = "tombstone_metadata_retrievable"
    hits = [h for h in registry.search(TOMBSTONE_PROBE_TITLE)
            if h["state"] == "withdrawn" and h["identifier"] != subject]
    if not hits:
        return SubCheck(name, False,
                        "no withdrawn fixture entry found; stage the tombstone probe")
    probe_id = hits[0]["identifier"]
    try:
        meta = registry.get_metadata(probe_id)
    except FabricError as exc:
        return SubCheck(name, False, f"tombstone {probe_id} metadata lost: {exc}")
    try:
        registry.download_artifact(probe_id)
    except GoneError:
        pass
    except FabricError as exc:
        return SubCheck(name, False, f"tombstone {probe_id} artifact error: {exc}")
    else:
        return SubCheck(name, False,
                        f"tombstone {probe_id} still serves its artifact")
    return SubCheck(name, True,
                    f"{probe_id} withdrawn at {meta['withdrawn_at']}, "
                    "metadata still resolvable")


def ensure_tombstone_fixture(registry) -> str:
    """Publish-and-withdraw the probe sibling entry; idempotent."""
    blob = b"tombstone-probe-artifact\n"
    record = ModelRecord(
        identifier="", title=TOMBSTONE_PROBE_TITLE,
        authors=[Author(name="Fabric Maintainers")], publication_year=2026,
        input_signature=IOSignature("float32", (None, 1)),
        output_signature=IOSignature("float32", (None, 1)),
        keywords=["tombstone", "probe", "fixture"],
        description="Known withdrawn entry used by accessibility checks.",
        instructions="Not executable; exists to prove tombstones resolve.",
        dependencies=[("none", "0")],
        uq_metric=UQMetricSpec("none", 1.0, "n/a"),
        servable_digest=hashlib.sha256(blob).hexdigest())
    try:
        identifier = registry.publish_model(to_document(record), blob)
    except FabricError:
        hits = [h for h in registry.search(TOMBSTONE_PROBE_TITLE)
                if h["title"] == TOMBSTONE_PROBE_TITLE]
        if not hits:
            raise
        identifier = hits[0]["identifier"]
    meta = registry.get_metadata(identifier)
    if meta["state"] != "withdrawn":
        registry.withdraw(identifier)
    return identifier


# -- interoperable -------------------------------------------------------------


def check_interoperable(identifier: str, registry, broker, endpoints=None,
                        tolerance: float = 1e-5,
                        timeout_s: float = DEFAULT_TASK_TIMEOUT_S) -> CheckResult:
    names = ["dual_profile_execution", "cross_profile_consistency",
             "renders_machine_and_human"]
    try:
        meta = registry.get_metadata(identifier)
    except FabricError as exc:
        return _unresolved("interoperable", names, f"identifier did not resolve: {exc}")

    subs = []
    online = _online_endpoints(broker, endpoints)
    by_precision: dict[str, dict] = {}
    for view in sorted(online, key=lambda v: v["name"]):
        by_precision.setdefault(view["profile"]["precision"], view)

    if len(by_precision) < 2:
        have = sorted(by_precision) or ["none"]
        subs.append(SubCheck("dual_profile_execution", False,
                             f"insufficient profiles: online profile set {have} "
                             "(need two distinct simulated architectures)"))
        subs.append(SubCheck("cross_profile_consistency", False,
                             "skipped: insufficient profiles"))
    else:
        outputs = {}
        failures = []
        try:
            reference = _example_request(_servable_blob(registry, identifier, meta))
        except FabricError as exc:
            failures.append(str(exc))
            reference = None
        if reference is not None:
            for precision in sorted(by_precision)[:2]:
                endpoint = by_precision[precision]
                try:
                    task_id = broker.submit_task(
                        identifier, reference, marker=SMOKE_MARKER,
                        requested_endpoint=endpoint["endpoint_id"])
                    view = _await_task(broker, task_id, timeout_s)
                except FabricError as exc:
                    failures.append(f"{precision}: {exc}")
                    continue
                if view["status"] != "completed":
                    failures.append(f"{precision}: {view['status']}: "
                                    f"{view.get('error_detail') or 'timed out'}")
                    continue
                header, tensor = frames.split_payload(broker.get_result(task_id))
                outputs[precision] = frames.decode_tensor(
                    tensor, header["shape"], header["element_type"])
        if failures:
            subs.append(SubCheck("dual_profile_execution", False, "; ".join(failures)))
            subs.append(SubCheck("cross_profile_consistency", False,
                                 "skipped: execution incomplete"))
        else:
            pair = sorted(outputs)
            subs.append(SubCheck(
                "dual_profile_execution", True,
                f"profiles {pair[0]} and {pair[1]} both completed "
                "(simulated architectures)"))
            report = consistency_check(outputs[pair[0]].astype("float64"),
                                       outputs[pair[1]].astype("float64"),
                                       tolerance=tolerance)
            subs.append(SubCheck(
                "cross_profile_consistency", report.passed,
                f"max |delta| {report.max_abs_deviation:.3g} "
                f"{'<=' if report.passed else '>'} {tolerance:.3g}"))

    try:
        record = from_document(meta["record"])
        machine = render_record(record, "machine")
        human = render_record(record, "human")
        round_trip = parse_document(machine) == to_document(record)
        ok = round_trip and record.title in human
        subs.append(SubCheck("renders_machine_and_human", ok,
                             f"machine {len(machine)} B, human {len(human)} B"
                             if ok else "render round-trip failed"))
    except FabricError as exc:
        subs.append(SubCheck("renders_machine_and_human", False, str(exc)))
    return _result("interoperable", subs)


# -- reusable -------------------------------------------------------------------


def _sample_patch_shape(registry, sample_id: str) -> tuple[int, tuple, int]:
    """(record count, per-record shape, records with truth) of a sample bag."""
    from .peaks.patches import decode_bpk1

    blob = registry.download_artifact(sample_id)
    with zipfile.ZipFile(io.BytesIO(blob)) as archive:
        members = [n for n in archive.namelist() if n.endswith(".bpk1")]
        if not members:
            raise FabricError(f"sample set {sample_id} carries no .bpk1 payload")
        inputs, truths = decode_bpk1(archive.read(sorted(members)[0]))
    with_truth = int(np.sum(~np.isnan(truths[:, 0])))
    return len(inputs), tuple(inputs.shape[1:]), with_truth


def check_reusable(identifier: str, registry) -> CheckResult:
    names = ["worked_example_reexecutable", "sample_set_conforms",
             "uq_report_present", "provenance_complete"]
    try:
        meta = registry.get_metadata(identifier)
    except FabricError as exc:
        return _unresolved("reusable", names, f"identifier did not resolve: {exc}")
    record = _record_of(meta)
    if not isinstance(record, ModelRecord):
        return _unresolved("reusable", names, "record does not parse as a model")

    subs = []
    try:
        from .peaks.servable import run_bundled_example

        blob = _servable_blob(registry, identifier, meta)
        result, expected = run_bundled_example(blob)
        identical = result.tensor == expected
        subs.append(SubCheck("worked_example_reexecutable", identical,
                             "bundled example re-executed byte-identically"
                             if identical else
                             "re-execution output differs from bundled output"))
    except FabricError as exc:
        subs.append(SubCheck("worked_example_reexecutable", False, str(exc)))

    sample_id = record.sample_set_id
    if not sample_id:
        subs.append(SubCheck("sample_set_conforms", False, "record names no sample set"))
    else:
        try:
            count, shape, with_truth = _sample_patch_shape(registry, sample_id)
        except FabricError as exc:
            subs.append(SubCheck("sample_set_conforms", False, f"{sample_id}: {exc}"))
        else:
            expected_shape = tuple(record.input_signature.shape[1:])
            conforms = shape == expected_shape and with_truth > 0
            if shape != expected_shape:
                evidence = (f"sample records have shape {list(shape)} but the "
                            f"signature expects {list(expected_shape)}")
            elif with_truth == 0:
                evidence = "sample set carries no ground-truth positions"
            else:
                evidence = (f"{count} records of shape {list(shape)} match the "
                            f"signature; {with_truth} carry truth")
            subs.append(SubCheck("sample_set_conforms", conforms, evidence))

    uq = record.uq_metric
    if uq is None or not uq.metric or uq.trust_threshold <= 0:
        subs.append(SubCheck("uq_report_present", False, "no uq_metric declared"))
    else:
        subs.append(SubCheck("uq_report_present", True,
                             f"{uq.metric} threshold {uq.trust_threshold:g} {uq.units}"))

    missing = []
    if not record.authors or not all(a.name for a in record.authors):
        missing.append("authors")
    if not record.publication_year:
        missing.append("publication_year")
    if not record.training_dataset_id:
        missing.append("training_dataset_id")
    else:
        try:
            registry.get_metadata(record.training_dataset_id)
        except FabricError:
            missing.append("training_dataset_id (unresolvable)")
    if not record.dependencies:
        missing.append("dependencies")
    subs.append(SubCheck("provenance_complete", not missing,
                         "authors, year, training set, dependencies all present"
                         if not missing else "missing: " + ", ".join(missing)))
    return _result("reusable", subs)


# -- report ---------------------------------------------------------------------


def fair_report(identifier: str, registry, broker, endpoints=None,
                tolerance: float = 1e-5,
                timeout_s: float = DEFAULT_TASK_TIMEOUT_S) -> FairReport:
    registry.get_metadata(identifier)
    checks = (
        check_findable(identifier, registry),
        check_accessible(identifier, registry, broker, timeout_s=timeout_s),
        check_interoperable(identifier, registry, broker, endpoints=endpoints,
                            tolerance=tolerance, timeout_s=timeout_s),
        check_reusable(identifier, registry),
    )
    return FairReport(model_identifier=identifier, checks=checks,
                      overall=all(c.passed for c in checks),
                      generated_at=datetime.now(timezone.utc).isoformat())
