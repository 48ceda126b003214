"""Shared fixtures: a small published reference stack (bags, datasets,
model with servable) used by registry, fabric, faircheck, and
acceptance tests."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from fairfab.bag import create_bag, mint_minid
from fairfab.metadata import (
    Author,
    DatasetRecord,
    IOSignature,
    ModelRecord,
    UQMetricSpec,
    to_document,
)
from fairfab.peaks import tinynet
from fairfab.peaks.patches import SynthParams, synth_dataset, write_bpk1
from fairfab.peaks.servable import export_servable, servable_digest
from fairfab.registry import Registry
from fairfab.rng import Xoshiro256StarStar
from fairfab.tasking.broker import Broker, ExecutionProfile
from fairfab.tasking.worker import EndpointWorker

TRUST_THRESHOLD_PX = 0.688
BOTH_PROFILES = ("strict-f32", "f64-accumulate")


@contextmanager
def live_fabric(registry, precisions=BOTH_PROFILES):
    """Broker plus one running endpoint worker per precision profile."""
    broker = Broker(registry)
    workers = [EndpointWorker(broker, registry, f"w{i}-{precision}",
                              ExecutionProfile(precision, 1), poll_interval_s=0.01)
               for i, precision in enumerate(precisions)]
    for worker in workers:
        worker.start()
    try:
        yield broker
    finally:
        for worker in workers:
            worker.close()


def failing(report):
    return {(c.principle, s.name)
            for c in report.checks for s in c.sub_checks if not s.passed}


def passing(report):
    return {(c.principle, s.name)
            for c in report.checks for s in c.sub_checks if s.passed}


def make_patch_bag(work: Path, name: str, count: int, seed: int) -> tuple[Path, str, list]:
    """Synthesize `count` patches, bag them, return (bag_path, minid, patches)."""
    source = work / f"{name}-src"
    source.mkdir(parents=True)
    patches = synth_dataset(count, SynthParams(), seed=seed)
    write_bpk1(source / "patches.bpk1", patches)
    bag_path = work / f"{name}-bag"
    create_bag(source, bag_path, info={"Source": "test fixture"})
    return bag_path, mint_minid(bag_path).identifier, patches


def dataset_record(title: str, minid: str, keywords=None) -> dict:
    return to_document(DatasetRecord(
        identifier="", title=title,
        authors=[Author(name="Fixture Author")], publication_year=2026,
        keywords=list(keywords or ["bragg", "synthetic"]),
        description="Synthetic patch bag used as a test fixture.",
        format_label="bpk1-bag", minid=minid))


def model_record(digest: str, training_dataset_id: str = "",
                 sample_set_id: str = "", **overrides) -> dict:
    fields = dict(
        identifier="", title="TinyNet localizer fixture",
        authors=[Author(name="Fixture Author", contact="fixture@example.org")],
        publication_year=2026,
        input_signature=IOSignature("float32", (None, 1, 11, 11), "patch"),
        output_signature=IOSignature("float32", (None, 2), "center px"),
        keywords=["bragg", "localization", "fixture"],
        description="Untrained TinyNet packaged for fabric tests.",
        instructions="Submit float32 [n,1,11,11] patches; read [n,2] centers.",
        dependencies=[("numpy", np.__version__)],
        training_dataset_id=training_dataset_id,
        sample_set_id=sample_set_id,
        uq_metric=UQMetricSpec("euclidean_px", TRUST_THRESHOLD_PX, "px"),
        license="CC-BY-4.0", servable_digest=digest)
    fields.update(overrides)
    return to_document(ModelRecord(**fields))


def make_servable(seed: int = 3) -> tuple[bytes, str]:
    weights = tinynet.init_weights(Xoshiro256StarStar(seed))
    blob = export_servable(weights)
    return blob, servable_digest(blob)


@dataclass
class ReferenceStack:
    work: Path
    registry: Registry
    servable: bytes
    digest: str
    train_bag: Path
    sample_bag: Path
    sample_patches: list
    train_id: str
    sample_id: str
    model_id: str


def build_reference_stack(work: Path, sample_count: int = 32,
                          with_sample: bool = True) -> ReferenceStack:
    work.mkdir(parents=True, exist_ok=True)
    registry = Registry(work / "registry")
    train_bag, train_minid, _ = make_patch_bag(work, "train", 16, seed=11)
    sample_bag, sample_minid, sample_patches = make_patch_bag(
        work, "sample", sample_count, seed=12)
    servable, digest = make_servable()
    train_id = registry.publish_dataset(
        dataset_record("Training patches fixture", train_minid,
                       ["bragg", "training"]), train_bag)
    sample_id = ""
    if with_sample:
        sample_id = registry.publish_dataset(
            dataset_record("Sample set fixture", sample_minid,
                           ["bragg", "sample"]), sample_bag)
    model_id = registry.publish_model(
        model_record(digest, training_dataset_id=train_id,
                     sample_set_id=sample_id), servable)
    return ReferenceStack(work=work, registry=registry, servable=servable,
                          digest=digest, train_bag=train_bag,
                          sample_bag=sample_bag, sample_patches=sample_patches,
                          train_id=train_id, sample_id=sample_id,
                          model_id=model_id)


@pytest.fixture
def reference_stack(tmp_path) -> ReferenceStack:
    return build_reference_stack(tmp_path / "stack")
