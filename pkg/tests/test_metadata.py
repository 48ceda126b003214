"""Metadata schema validation and rendering."""

import json

import pytest
from hypothesis import given, settings, strategies as st

from fairfab.errors import ValidationError
from fairfab.metadata import (
    Author,
    DatasetRecord,
    IOSignature,
    MetadataParseError,
    ModelRecord,
    UQMetricSpec,
    extract_signature,
    from_document,
    identifier_type_of,
    parse_document,
    render_record,
    to_document,
    validate_record,
)


def model_record(**overrides):
    base = dict(
        identifier="local-doi:10.99999/abcd1234",
        title="Peak localizer",
        authors=[Author("A. Researcher", "a@example.org")],
        publication_year=2022,
        input_signature=IOSignature("float32", (None, 1, 11, 11), "intensity patch"),
        output_signature=IOSignature("float32", (None, 2), "peak position"),
        keywords=["bragg", "localization"],
        description="Sub-pixel peak regressor.",
        instructions="Run the bundled example via the CLI.",
        dependencies=[("numpy", "2.2")],
        training_dataset_id="local-doi:10.99999/11112222",
        sample_set_id="minid:abcdefghijkl",
        uq_metric=UQMetricSpec("euclidean_px_p95", 0.688, "pixel"),
        license="MIT",
        servable_digest="00" * 32,
    )
    base.update(overrides)
    return ModelRecord(**base)


def dataset_record(**overrides):
    base = dict(
        identifier="local-doi:10.99999/deadbeef",
        title="Synthetic peak patches",
        authors=[Author("A. Researcher")],
        publication_year=2022,
        keywords=["patches"],
        description="Synthetic 11x11 patches.",
        format_label="bpk1",
        minid="minid:abcdefghijkl",
        related_identifiers=[("IsSupplementTo", "local-doi:10.99999/abcd1234")],
    )
    base.update(overrides)
    return DatasetRecord(**base)


def test_complete_records_have_no_violations():
    assert validate_record(to_document(model_record())) == []
    assert validate_record(to_document(dataset_record())) == []


def test_missing_authors_is_exactly_one_violation():
    doc = to_document(model_record())
    doc["authors"] = []
    violations = validate_record(doc)
    assert len(violations) == 1
    assert violations[0].field == "authors"


@pytest.mark.parametrize("field", ["identifier", "title", "publication_year",
                                   "input_signature", "output_signature", "keywords"])
def test_every_mandatory_model_field_is_enforced(field):
    doc = to_document(model_record())
    doc.pop(field)
    assert any(v.field.startswith(field) for v in validate_record(doc))


def test_nonpositive_shape_dimension_named():
    doc = to_document(model_record())
    doc["input_signature"]["shape"] = [0, 11, 11]
    violations = validate_record(doc)
    assert any(v.field == "input_signature.shape[0]" for v in violations)


def test_variable_dim_only_leading():
    doc = to_document(model_record())
    doc["output_signature"]["shape"] = [None, None]
    violations = validate_record(doc)
    assert any(v.field == "output_signature.shape[1]" for v in violations)
    doc["output_signature"]["shape"] = [None, 2]
    assert validate_record(doc) == []


def test_year_range_and_dependency_versions():
    doc = to_document(model_record())
    doc["publication_year"] = 1888
    assert any(v.field == "publication_year" for v in validate_record(doc))
    doc = to_document(model_record(dependencies=[("numpy", "")]))
    assert any(v.field.startswith("dependencies[0]") for v in validate_record(doc))


def test_unparseable_document_is_parse_error():
    with pytest.raises(MetadataParseError):
        parse_document(b"{nope")
    with pytest.raises(MetadataParseError):
        validate_record("[1, 2, 3]")


def test_machine_render_parse_round_trip():
    record = model_record()
    text = render_record(record, "machine")
    doc = parse_document(text)
    assert validate_record(doc) == []
    assert from_document(doc) == record

    dataset = dataset_record()
    assert from_document(parse_document(render_record(dataset, "machine"))) == dataset


def test_machine_render_has_sorted_keys():
    text = render_record(model_record(), "machine")
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    assert text == json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def test_human_render_contains_fields():
    record = model_record(authors=[Author("First Person"), Author("Second Person")])
    page = render_record(record, "human")
    assert page.lstrip().startswith("<!DOCTYPE html>")
    for needle in (record.title, record.identifier, "First Person", "Second Person"):
        assert needle in page


def test_identifier_type_carried_in_machine_document():
    doc = parse_document(render_record(model_record(), "machine"))
    assert doc["identifier_type"] == "local-doi"
    assert identifier_type_of("minid:abc") == "minid"
    assert identifier_type_of("doi:10.1/x") == "other"


def test_render_refuses_invalid_record():
    bad = model_record(title="")
    with pytest.raises(ValidationError):
        render_record(bad, "machine")
    with pytest.raises(ValidationError):
        render_record(model_record(), "pdf")


def test_extract_signature_returns_enforced_pair():
    record = model_record()
    input_sig, output_sig = extract_signature(record)
    assert input_sig.shape == (None, 1, 11, 11)
    assert input_sig.element_type == "float32"
    assert output_sig.shape == (None, 2)
    assert input_sig.concrete_shape(16384) == (16384, 1, 11, 11)
    assert output_sig.concrete_shape(7) == (7, 2)
    with pytest.raises(ValidationError):
        extract_signature(model_record(publication_year=1700))


json_scalars = st.one_of(st.none(), st.booleans(), st.integers(), st.floats(allow_nan=False),
                         st.text(max_size=20))
json_trees = st.recursive(
    json_scalars,
    lambda children: st.one_of(st.lists(children, max_size=4),
                               st.dictionaries(st.text(max_size=12), children, max_size=4)),
    max_leaves=20)


@settings(max_examples=300, deadline=None)
@given(st.dictionaries(st.sampled_from(
    ["record_type", "identifier", "title", "authors", "publication_year", "keywords",
     "input_signature", "output_signature", "dependencies", "uq_metric",
     "related_identifiers", "description"]), json_trees, max_size=12))
def test_validate_record_is_total_on_arbitrary_trees(doc):
    violations = validate_record(doc)
    assert isinstance(violations, list)
    for violation in violations:
        assert violation.field and violation.message


@settings(max_examples=150, deadline=None)
@given(
    title=st.text(min_size=1, max_size=40).filter(lambda s: s.strip()),
    description=st.text(max_size=80),
    year=st.integers(min_value=1990, max_value=2100),
    names=st.lists(st.text(min_size=1, max_size=15).filter(lambda s: s.strip()),
                   min_size=1, max_size=3),
    keywords=st.lists(st.text(min_size=1, max_size=10), min_size=1, max_size=4),
    batch=st.one_of(st.none(), st.integers(min_value=1, max_value=64)),
)
def test_round_trip_identity_on_random_valid_records(title, description, year, names,
                                                     keywords, batch):
    record = model_record(
        title=title, description=description, publication_year=year,
        authors=[Author(n) for n in names], keywords=keywords,
        input_signature=IOSignature("float32", (batch, 1, 11, 11), "patch"))
    assert from_document(parse_document(render_record(record, "machine"))) == record
