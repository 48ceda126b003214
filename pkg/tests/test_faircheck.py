"""FAIR grading: a healthy stack earns all sixteen sub-checks, and each
staged degradation flips exactly the sub-checks it should."""

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

import pytest

from conftest import (
    BOTH_PROFILES,
    build_reference_stack,
    failing,
    live_fabric,
    model_record,
    passing,
)
from fairfab.errors import NotFoundError
from fairfab.faircheck import (
    SMOKE_MARKER,
    TOMBSTONE_PROBE_TITLE,
    check_accessible,
    check_findable,
    ensure_tombstone_fixture,
    fair_report,
)
from fairfab.registry import Registry
from fairfab.tasking.broker import Broker, ExecutionProfile

INVENTORY = {
    "findable": ["identifier_resolves", "metadata_valid", "signatures_present",
                 "dependencies_versioned", "instructions_present",
                 "sample_set_resolves"],
    "accessible": ["artifact_download_digest", "smoke_inference",
                   "tombstone_metadata_retrievable"],
    "interoperable": ["dual_profile_execution", "cross_profile_consistency",
                      "renders_machine_and_human"],
    "reusable": ["worked_example_reexecutable", "sample_set_conforms",
                 "uq_report_present", "provenance_complete"],
}


def assert_invariants(report):
    for check in report.checks:
        assert check.passed == all(s.passed for s in check.sub_checks)
    assert report.overall == all(c.passed for c in report.checks)
    stamp = datetime.fromisoformat(report.generated_at)
    assert stamp.utcoffset() == timezone.utc.utcoffset(None)


def staged_report(work, *, with_sample=True, overrides=None, tombstone=True,
                  precisions=BOTH_PROFILES, mutate=None):
    stack = build_reference_stack(work / "stack", with_sample=with_sample)
    model_id = stack.model_id
    if overrides is not None:
        kwargs = dict(training_dataset_id=stack.train_id,
                      sample_set_id=stack.sample_id)
        kwargs.update(overrides)
        model_id = stack.registry.publish_model(
            model_record(stack.digest, **kwargs), stack.servable)
    if tombstone:
        ensure_tombstone_fixture(stack.registry)
    if mutate is not None:
        mutate(stack)
    with live_fabric(stack.registry, precisions) as broker:
        report = fair_report(model_id, stack.registry, broker)
    assert_invariants(report)
    return stack, broker, report


# -- healthy stack -------------------------------------------------------------------


def test_healthy_stack_passes_every_sub_check(tmp_path):
    stack, broker, report = staged_report(tmp_path)
    assert report.overall, report.summary_lines()
    assert failing(report) == set()
    assert [c.principle for c in report.checks] == list(INVENTORY)
    for check in report.checks:
        assert [s.name for s in check.sub_checks] == INVENTORY[check.principle]


def test_smoke_tasks_are_marked_and_filterable(tmp_path):
    stack, broker, report = staged_report(tmp_path)
    tasks = broker.list_tasks(include_markers=True)
    assert len(tasks) == 3  # one accessibility smoke + two profile runs
    assert all(t["marker"] == SMOKE_MARKER for t in tasks)
    assert broker.list_tasks(include_markers=False) == []


def test_report_renders_machine_and_summary(tmp_path):
    stack, broker, report = staged_report(tmp_path)
    parsed = json.loads(report.render_machine())
    assert parsed["overall"] == "PASS"
    assert parsed["model_identifier"] == stack.model_id
    assert len(parsed["checks"]) == 4

    lines = report.summary_lines()
    assert lines[0] == f"FAIR report for {stack.model_id}"
    assert lines[-1] == "FAIR overall: PASS"
    assert len(lines) == 1 + 4 + 16 + 1


def test_outcomes_deterministic_for_fixed_state(tmp_path):
    stack = build_reference_stack(tmp_path / "stack")
    ensure_tombstone_fixture(stack.registry)
    with live_fabric(stack.registry) as broker:
        first = fair_report(stack.model_id, stack.registry, broker)
        second = fair_report(stack.model_id, stack.registry, broker)
    outcomes = lambda r: [(c.principle, s.name, s.passed)
                          for c in r.checks for s in c.sub_checks]
    assert outcomes(first) == outcomes(second)
    assert first.overall == second.overall


# -- staged degradations ---------------------------------------------------------------


@dataclass
class Degradation:
    label: str
    expect: set
    probe: tuple | None = None  # (principle, sub-check, evidence substring)
    stage: dict = field(default_factory=dict)


DEGRADATIONS = [
    Degradation(
        "no-dependencies",
        {("findable", "dependencies_versioned"),
         ("reusable", "provenance_complete")},
        ("findable", "dependencies_versioned", "no dependencies declared"),
        {"overrides": {"dependencies": []}}),
    Degradation(
        "no-instructions",
        {("findable", "instructions_present")},
        ("findable", "instructions_present", "no usage instructions"),
        {"overrides": {"instructions": ""}}),
    Degradation(
        "no-sample-set-named",
        {("findable", "sample_set_resolves"), ("reusable", "sample_set_conforms")},
        ("reusable", "sample_set_conforms", "record names no sample set"),
        {"with_sample": False}),
    Degradation(
        "withdrawn-sample-set",
        {("findable", "sample_set_resolves"), ("reusable", "sample_set_conforms")},
        ("findable", "sample_set_resolves", "state=withdrawn"),
        {"mutate": lambda stack: stack.registry.withdraw(stack.sample_id)}),
    Degradation(
        "unresolvable-training-set",
        {("reusable", "provenance_complete")},
        ("reusable", "provenance_complete", "training_dataset_id (unresolvable)"),
        {"overrides": {"training_dataset_id": "local-doi:10.99999/deadbeef"}}),
    Degradation(
        "withdrawn-model",
        {("accessible", "artifact_download_digest"),
         ("accessible", "smoke_inference"),
         ("interoperable", "dual_profile_execution"),
         ("interoperable", "cross_profile_consistency"),
         ("reusable", "worked_example_reexecutable")},
        ("accessible", "smoke_inference", "artifact unavailable"),
        {"mutate": lambda stack: stack.registry.withdraw(stack.model_id)}),
    Degradation(
        "tombstone-fixture-missing",
        {("accessible", "tombstone_metadata_retrievable")},
        ("accessible", "tombstone_metadata_retrievable", "stage the tombstone probe"),
        {"tombstone": False}),
    Degradation(
        "no-endpoints-online",
        {("accessible", "smoke_inference"),
         ("interoperable", "dual_profile_execution"),
         ("interoperable", "cross_profile_consistency")},
        ("accessible", "smoke_inference", "no endpoint online"),
        {"precisions": ()}),
    Degradation(
        "single-profile-only",
        {("interoperable", "dual_profile_execution"),
         ("interoperable", "cross_profile_consistency")},
        ("interoperable", "dual_profile_execution",
         "insufficient profiles: online profile set ['strict-f32']"),
        {"precisions": ("strict-f32", "strict-f32")}),
]


@pytest.mark.parametrize("case", DEGRADATIONS, ids=lambda c: c.label)
def test_degradation_flips_exactly_expected_sub_checks(tmp_path, case):
    stack, broker, report = staged_report(tmp_path, **case.stage)
    assert failing(report) == case.expect, report.summary_lines()
    assert not report.overall
    if case.probe:
        principle, name, needle = case.probe
        assert needle in report.check(principle).sub(name).evidence


def test_no_endpoints_names_empty_profile_set(tmp_path):
    stack, broker, report = staged_report(tmp_path, precisions=())
    evidence = report.check("interoperable").sub("dual_profile_execution").evidence
    assert "online profile set ['none']" in evidence


def test_fixing_degradations_never_breaks_passing_sub_checks(tmp_path):
    stack = build_reference_stack(tmp_path / "stack")
    broker = Broker(stack.registry)
    degraded = fair_report(stack.model_id, stack.registry, broker)
    assert not degraded.overall

    ensure_tombstone_fixture(stack.registry)
    with live_fabric(stack.registry) as live:
        healthy = fair_report(stack.model_id, stack.registry, live)
    assert healthy.overall
    assert passing(degraded) <= passing(healthy)


# -- individual check behaviors --------------------------------------------------------


def test_fair_report_unknown_identifier_raises(tmp_path):
    stack = build_reference_stack(tmp_path / "stack")
    with pytest.raises(NotFoundError):
        fair_report("local-doi:10.99999/00000000", stack.registry,
                    Broker(stack.registry))


def test_findable_on_dataset_record(reference_stack):
    result = check_findable(reference_stack.train_id, reference_stack.registry)
    assert result.sub("identifier_resolves").passed
    assert result.sub("metadata_valid").passed
    for name in INVENTORY["findable"][2:]:
        sub = result.sub(name)
        assert not sub.passed
        assert sub.evidence == "record is not a model"


def test_findable_unversioned_dependency_via_stub():
    class StubRegistry:
        def __init__(self, entries):
            self.entries = entries

        def get_metadata(self, identifier):
            if identifier in self.entries:
                return self.entries[identifier]
            raise NotFoundError(f"no entry for {identifier}")

    doc = model_record("00" * 32, sample_set_id="local-doi:10.99999/aaaaaaaa")
    doc["identifier"] = "local-doi:10.99999/bbbbbbbb"
    doc["dependencies"] = [{"name": "numpy", "version": ""}]
    sample_meta = {"identifier": "local-doi:10.99999/aaaaaaaa",
                   "record": {}, "state": "published"}
    registry = StubRegistry({
        doc["identifier"]: {"identifier": doc["identifier"], "record": doc,
                            "state": "published"},
        sample_meta["identifier"]: sample_meta})

    result = check_findable(doc["identifier"], registry)
    sub = result.sub("dependencies_versioned")
    assert not sub.passed
    assert sub.evidence == "missing versions for: numpy"
    # the schema check independently flags the same record
    assert not result.sub("metadata_valid").passed
    assert result.sub("sample_set_resolves").passed


def test_stale_endpoint_is_not_online(reference_stack):
    now = [0.0]
    broker = Broker(reference_stack.registry, clock=lambda: now[0])
    broker.register_endpoint("sleepy", ExecutionProfile())
    now[0] = 31.0  # one past the liveness window
    ensure_tombstone_fixture(reference_stack.registry)
    result = check_accessible(reference_stack.model_id,
                              reference_stack.registry, broker)
    assert result.sub("smoke_inference").evidence == "no endpoint online"


def test_cross_profile_delta_is_reported(tmp_path):
    stack = build_reference_stack(tmp_path / "stack")
    ensure_tombstone_fixture(stack.registry)
    with live_fabric(stack.registry) as broker:
        report = fair_report(stack.model_id, stack.registry, broker)
    evidence = report.check("interoperable").sub("cross_profile_consistency").evidence
    assert evidence.startswith("max |delta|")
    assert "<=" in evidence


# -- tombstone fixture -----------------------------------------------------------------


def test_ensure_tombstone_fixture_idempotent(tmp_path):
    registry = Registry(tmp_path / "registry")
    first = ensure_tombstone_fixture(registry)
    second = ensure_tombstone_fixture(registry)
    assert first == second
    meta = registry.get_metadata(first)
    assert meta["state"] == "withdrawn"
    assert meta["record"]["title"] == TOMBSTONE_PROBE_TITLE
    with pytest.raises(Exception):
        registry.download_artifact(first)


def test_tombstone_probe_ignores_the_subject_itself(tmp_path):
    # with the subject withdrawn too, the probe must find the sibling fixture
    stack, broker, report = staged_report(
        tmp_path, mutate=lambda s: s.registry.withdraw(s.model_id))
    assert report.check("accessible").sub("tombstone_metadata_retrievable").passed
