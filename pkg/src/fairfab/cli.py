"""fairfab: package datasets as checksummed bags, publish models with
machine-readable metadata, run them through the broker/endpoint fabric,
and grade the result FAIR Pass/Fail.

Exit codes: 0 the operation's postcondition held, 1 operational failure
(diagnostic on stderr), 2 usage error. With --machine, documents go to
stdout in the machine metadata format and diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import base64
import platform
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import bag as bagmod
from . import faircheck as fairmod
from .config import CliConfig, load_config
from .errors import FabricError, ValidationError
from .metadata import (
    Author,
    DatasetRecord,
    IOSignature,
    ModelRecord,
    UQMetricSpec,
    parse_document,
    render_document,
    to_document,
)
from .peaks import tinynet
from .peaks.patches import (
    SynthParams,
    patches_to_arrays,
    read_bpk1,
    read_bpk1_arrays,
    synth_dataset,
    write_bpk1,
)
from .peaks.servable import export_servable, servable_digest
from .peaks.train import TrainConfig, train_tiny
from .registry import Registry
from .tasking import frames
from .tasking.broker import Broker, ExecutionProfile
from .tasking.worker import EndpointWorker
from .uq import consistency_check, error_stats, euclidean_errors, trust_gate

QUICKSTART_SEED = 20260815


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(args, document: dict, human_lines: list[str]) -> None:
    if args.machine:
        sys.stdout.write(render_document(document))
    else:
        for line in human_lines:
            print(line)


def _registry_of(config: CliConfig):
    if config.registry_url:
        from .http.clients import RegistryClient
        return RegistryClient(base_url=config.registry_url)
    return Registry(Path(config.store_path) / "registry")


def _broker_of(config: CliConfig, registry):
    if config.broker_url:
        from .http.clients import BrokerClient
        return BrokerClient(base_url=config.broker_url)
    return Broker(registry)


def _await_task(broker, task_id: str, timeout_s: float) -> dict:
    deadline = time.monotonic() + timeout_s
    while True:
        view = broker.poll_task(task_id)
        if view["status"] in ("completed", "failed") or time.monotonic() >= deadline:
            return view
        time.sleep(0.05)


# -- bags ---------------------------------------------------------------------


def _cmd_bag_create(args, config) -> int:
    info = {}
    for pair in args.info or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValidationError(f"--info needs KEY=VALUE, got {pair!r}")
        info[key] = value
    bag = bagmod.create_bag(args.source, args.dest, algorithm=args.algorithm,
                            info=info or None)
    minid = bagmod.mint_minid(args.dest)
    _emit(args, {"bag": str(args.dest), "algorithm": bag.checksum_algorithm,
                 "payload_files": len(bag.payload_entries),
                 "minid": minid.identifier},
          [f"created bag at {args.dest} ({len(bag.payload_entries)} payload files)",
           f"minid: {minid.identifier}"])
    return 0


def _cmd_bag_validate(args, config) -> int:
    report = bagmod.validate_bag(args.path)
    doc = {"bag": str(args.path), "valid": report.valid,
           "missing_files": report.missing_files,
           "corrupted_files": [{"path": p, "expected": e, "actual": a}
                               for p, e, a in report.corrupted_files],
           "extra_files": report.extra_files}
    lines = [f"bag {args.path}: {'valid' if report.valid else 'INVALID'}"]
    lines += [f"  missing: {p}" for p in report.missing_files]
    lines += [f"  corrupted: {p} (expected {e[:12]}.., got {a[:12]}..)"
              for p, e, a in report.corrupted_files]
    lines += [f"  unlisted: {p}" for p in report.extra_files]
    _emit(args, doc, lines)
    return 0 if report.valid else 1


def _cmd_bag_minid(args, config) -> int:
    minid = bagmod.mint_minid(args.path)
    _emit(args, {"bag": str(args.path), "minid": minid.identifier,
                 "source_digest": minid.source_digest},
          [minid.identifier])
    return 0


# -- peaks workflow --------------------------------------------------------------


def _cmd_synth(args, config) -> int:
    params = SynthParams(noise_sigma=args.noise_sigma)
    patches = synth_dataset(args.count, params, seed=args.seed)
    if args.truthless:
        for patch in patches:
            patch.truth = None
    write_bpk1(args.out, patches)
    _emit(args, {"out": str(args.out), "count": args.count, "seed": args.seed,
                 "noise_sigma": args.noise_sigma, "truthless": bool(args.truthless)},
          [f"wrote {args.count} patches to {args.out}"])
    return 0


def _cmd_train(args, config) -> int:
    patches = read_bpk1(args.data)
    train_config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                               learning_rate=args.learning_rate,
                               momentum=args.momentum, patience=args.patience,
                               validation_fraction=args.validation_fraction,
                               seed=args.seed)
    weights, log = train_tiny(patches, train_config)
    tinynet.save_weights(args.out, weights)
    best = log.epochs[log.best_epoch - 1]
    _emit(args, {"out": str(args.out), "best_epoch": log.best_epoch,
                 "stopped_epoch": log.stopped_epoch,
                 "stopped_early": log.stopped_early,
                 "val_mean_error_px": best["val_mean_error_px"]},
          [f"trained {log.stopped_epoch} epochs on {len(patches)} patches",
           f"best epoch {log.best_epoch}: val mean error "
           f"{best['val_mean_error_px']:.4f} px",
           f"weights saved to {args.out}"])
    return 0


def _cmd_export(args, config) -> int:
    weights = tinynet.load_weights(args.weights)
    blob = export_servable(weights)
    Path(args.out).write_bytes(blob)
    digest = servable_digest(blob)
    _emit(args, {"out": str(args.out), "servable_digest": digest,
                 "bytes": len(blob)},
          [f"exported servable to {args.out} ({len(blob)} bytes)",
           f"servable_digest: {digest}"])
    return 0


# -- services ---------------------------------------------------------------------


def _cmd_serve(args, config) -> int:
    import uvicorn

    from .http import create_broker_app, create_registry_app

    if args.service == "registry":
        app = create_registry_app(Registry(Path(config.store_path) / "registry"))
    else:
        registry = _registry_of(config)
        if isinstance(registry, Registry):
            _say("note: broker is using the local store directly "
                 "(set --registry-url to front a served registry)")
        app = create_broker_app(Broker(registry))
    _say(f"serving {args.service} on {args.host}:{args.port}")
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_endpoint_run(args, config) -> int:
    registry = _registry_of(config)
    broker = _broker_of(config, registry)
    worker = EndpointWorker(broker, registry, name=args.name,
                            profile=ExecutionProfile(precision=args.precision,
                                                     slots=args.slots),
                            timeout_s=config.task_timeout_s)
    _say(f"endpoint {args.name} ({args.precision}, {args.slots} slots) "
         f"registered as {worker.endpoint_id}")
    try:
        if args.max_seconds is not None:
            done = worker.run_until_idle(max_seconds=args.max_seconds)
            _say(f"processed {done} tasks")
        else:
            worker.start()
            while True:
                time.sleep(0.5)
    except KeyboardInterrupt:
        _say("shutting down")
    finally:
        worker.close()
    return 0


# -- publication ---------------------------------------------------------------------


def _cmd_publish_model(args, config) -> int:
    record = parse_document(Path(args.record).read_text(encoding="utf-8"))
    servable = Path(args.servable).read_bytes()
    registry = _registry_of(config)
    identifier = registry.publish_model(record, servable)
    _emit(args, {"identifier": identifier},
          [f"published model {identifier}"])
    return 0


def _cmd_publish_dataset(args, config) -> int:
    record = parse_document(Path(args.record).read_text(encoding="utf-8"))
    registry = _registry_of(config)
    identifier = registry.publish_dataset(record, args.bag)
    _emit(args, {"identifier": identifier},
          [f"published dataset {identifier}"])
    return 0


def _cmd_get(args, config) -> int:
    registry = _registry_of(config)
    meta = registry.get_metadata(args.identifier)
    record = meta["record"]
    _emit(args, meta,
          [f"{meta['identifier']} ({record.get('record_type', '?')}): "
           f"{record.get('title', '')}",
           f"  state: {meta['state']}",
           f"  published: {meta['published_at']}",
           f"  artifact sha256: {meta['artifact_digest']}"])
    return 0


def _cmd_withdraw(args, config) -> int:
    registry = _registry_of(config)
    meta = registry.withdraw(args.identifier)
    _emit(args, meta, [f"{args.identifier} withdrawn; metadata remains resolvable"])
    return 0


def _cmd_search(args, config) -> int:
    registry = _registry_of(config)
    hits = registry.search(args.query)
    _emit(args, {"query": args.query, "hits": hits},
          [f"{h['identifier']} [{h['state']}] score {h['score']}: {h['title']}"
           for h in hits] or ["no matches"])
    return 0


# -- invocation ---------------------------------------------------------------------


def _inline_reference(path: str, start: int, count: int | None) -> dict:
    inputs, _ = read_bpk1_arrays(path, start, count)
    return {"kind": "inline", "element_type": "float32",
            "shape": list(inputs.shape),
            "data_b64": base64.b64encode(frames.encode_tensor(inputs)).decode("ascii")}


def _cmd_invoke(args, config) -> int:
    registry = _registry_of(config)
    broker = _broker_of(config, registry)
    if args.dataset:
        reference = {"kind": "dataset", "identifier": args.dataset,
                     "start": args.start, "count": args.count or 1}
    elif args.input:
        reference = _inline_reference(args.input, args.start, args.count)
    else:
        raise ValidationError("invoke needs --input FILE.bpk1 or --dataset ID")
    task_id = broker.submit_task(args.model, reference,
                                 requested_endpoint=args.endpoint)
    if args.no_wait:
        _emit(args, {"task_id": task_id, "status": "pending"},
              [f"submitted {task_id}"])
        return 0
    view = _await_task(broker, task_id, config.task_timeout_s)
    if view["status"] != "completed":
        detail = view.get("error_detail") or "timed out waiting for an endpoint"
        raise FabricError(f"task {task_id} {view['status']}: {detail}")
    payload = broker.get_result(task_id)
    header, tensor = frames.split_payload(payload)
    if args.out:
        Path(args.out).write_bytes(payload)
    _emit(args, {"task_id": task_id, "status": view["status"],
                 "result_digest": view["result_digest"],
                 "output_shape": header["shape"],
                 "output_element_type": header["element_type"],
                 "out": str(args.out) if args.out else None},
          [f"task {task_id} completed",
           f"output {header['element_type']} {header['shape']}"
           + (f" written to {args.out}" if args.out else "")])
    return 0


def _cmd_status(args, config) -> int:
    registry = _registry_of(config)
    broker = _broker_of(config, registry)
    view = broker.poll_task(args.task_id)
    _emit(args, view,
          [f"{view['task_id']}: {view['status']} (attempts {view['attempts']})"]
          + ([f"  error: {view['error_detail']}"] if view.get("error_detail") else []))
    return 0


def _cmd_result(args, config) -> int:
    registry = _registry_of(config)
    broker = _broker_of(config, registry)
    payload = broker.get_result(args.task_id)
    header, tensor = frames.split_payload(payload)
    if args.out:
        Path(args.out).write_bytes(payload)
    _emit(args, {"task_id": args.task_id, "output_shape": header["shape"],
                 "output_element_type": header["element_type"],
                 "out": str(args.out) if args.out else None},
          [f"result: {header['element_type']} {header['shape']}"
           + (f" written to {args.out}" if args.out else "")])
    return 0


# -- verification ---------------------------------------------------------------------


def _cmd_uq_report(args, config) -> int:
    payload = Path(args.predictions).read_bytes()
    header, tensor = frames.split_payload(payload)
    predictions = frames.decode_tensor(tensor, header["shape"], header["element_type"])
    _, truths = read_bpk1_arrays(args.data, args.start,
                                 args.count if args.count else len(predictions))
    if np.isnan(truths).any():
        raise ValidationError("data slice carries no ground truth; cannot grade")
    distances = euclidean_errors(np.asarray(predictions, dtype=np.float64),
                                 np.asarray(truths, dtype=np.float64))
    threshold = args.threshold if args.threshold is not None else config.trust_threshold_px
    report = error_stats(distances, trust_threshold=threshold)
    _, justification = trust_gate(report)
    _emit(args, report.to_document(),
          [f"n {report.n}: mean {report.mean_error:.4f} px, "
           f"std {report.std_error:.4f} px, p95 {report.p95_error:.4f} px, "
           f"max {report.max_error:.4f} px",
           justification])
    return 0


def _cmd_faircheck(args, config) -> int:
    registry = _registry_of(config)
    broker = _broker_of(config, registry)
    report = fairmod.fair_report(args.identifier, registry, broker,
                                 tolerance=config.consistency_tolerance,
                                 timeout_s=config.task_timeout_s)
    _emit(args, report.to_document(), report.summary_lines())
    return 0 if report.overall else 1


# -- quickstart --------------------------------------------------------------------


def _quickstart_records(config, train_id: str, sample_id: str,
                        digest: str) -> ModelRecord:
    return ModelRecord(
        identifier="",
        title="TinyNet Bragg peak localizer (quickstart)",
        authors=[Author(name="Quickstart Pipeline", contact="quickstart@fairfab.local")],
        publication_year=2026,
        input_signature=IOSignature("float32", (None, 1, 11, 11),
                                    "peak patch intensities"),
        output_signature=IOSignature("float32", (None, 2), "peak center (x, y) px"),
        keywords=["bragg", "diffraction", "localization", "cnn", "quickstart"],
        description="Small CNN that regresses the sub-pixel peak center "
                    "from an 11x11 intensity patch.",
        instructions="Submit float32 [n,1,11,11] patches as an inference task; "
                     "the result payload holds float32 [n,2] centers in pixels.",
        dependencies=[("python", platform.python_version()),
                      ("numpy", np.__version__)],
        training_dataset_id=train_id,
        sample_set_id=sample_id,
        uq_metric=UQMetricSpec("euclidean_px", config.trust_threshold_px, "px"),
        license="CC-BY-4.0",
        servable_digest=digest)


def _dataset_record(title: str, count: int, minid: str, role: str) -> DatasetRecord:
    return DatasetRecord(
        identifier="", title=title,
        authors=[Author(name="Quickstart Pipeline")],
        publication_year=2026,
        keywords=["bragg", "synthetic", "patches", role],
        description=f"{count} synthetic 11x11 Bragg peak patches with "
                    "ground-truth centers.",
        format_label="bpk1-bag", minid=minid)


def _cmd_quickstart(args, config) -> int:
    work = Path(args.work) if args.work else Path(
        tempfile.mkdtemp(prefix="fairfab-quickstart-"))
    work.mkdir(parents=True, exist_ok=True)
    _say(f"quickstart working under {work}")
    seed = args.seed

    _say(f"[1/7] synthesizing {args.train_count} training and "
         f"{args.sample_count} sample patches")
    params = SynthParams()
    train_patches = synth_dataset(args.train_count, params, seed=seed)
    sample_patches = synth_dataset(args.sample_count, params, seed=seed + 1)
    train_src = work / "train-src"
    sample_src = work / "sample-src"
    train_src.mkdir(exist_ok=True)
    sample_src.mkdir(exist_ok=True)
    write_bpk1(train_src / "patches.bpk1", train_patches)
    write_bpk1(sample_src / "patches.bpk1", sample_patches)
    train_bag, sample_bag = work / "train-bag", work / "sample-bag"
    bagmod.create_bag(train_src, train_bag, info={"Source": "fairfab quickstart"})
    bagmod.create_bag(sample_src, sample_bag, info={"Source": "fairfab quickstart"})
    train_minid = bagmod.mint_minid(train_bag).identifier
    sample_minid = bagmod.mint_minid(sample_bag).identifier
    _say(f"      bags minted: train {train_minid}, sample {sample_minid}")

    _say(f"[2/7] training TinyNet ({args.epochs} epochs max)")
    weights, log = train_tiny(train_patches,
                              TrainConfig(epochs=args.epochs, batch_size=128,
                                          learning_rate=0.01, patience=10,
                                          seed=seed))
    best = log.epochs[log.best_epoch - 1]
    _say(f"      best epoch {log.best_epoch}: val mean error "
         f"{best['val_mean_error_px']:.3f} px")

    _say("[3/7] exporting servable")
    servable = export_servable(weights)
    digest = servable_digest(servable)

    _say("[4/7] publishing datasets and model")
    registry = Registry(work / "store" / "registry")
    fairmod.ensure_tombstone_fixture(registry)
    train_id = registry.publish_dataset(to_document(_dataset_record(
        "Synthetic Bragg peak training patches", args.train_count,
        train_minid, "training")), train_bag)
    sample_id = registry.publish_dataset(to_document(_dataset_record(
        "Synthetic Bragg peak sample set", args.sample_count,
        sample_minid, "sample")), sample_bag)
    model_id = registry.publish_model(
        to_document(_quickstart_records(config, train_id, sample_id, digest)),
        servable)
    _say(f"      model: {model_id}")

    precisions = [p.strip() for p in args.profiles.split(",") if p.strip()]
    _say(f"[5/7] starting broker with endpoints: {', '.join(precisions)}")
    broker = Broker(registry)
    workers = [EndpointWorker(broker, registry, name=f"quickstart-{precision}",
                              profile=ExecutionProfile(precision=precision, slots=2),
                              timeout_s=config.task_timeout_s)
               for precision in precisions]
    overall = False
    try:
        for worker in workers:
            worker.start()

        _say(f"[6/7] invoking the model on the {args.sample_count}-patch sample set")
        reference = {"kind": "dataset", "identifier": sample_id,
                     "start": 0, "count": args.sample_count}
        outputs = {}
        for worker in workers:
            task_id = broker.submit_task(model_id, reference,
                                         requested_endpoint=worker.endpoint_id)
            view = _await_task(broker, task_id, config.task_timeout_s)
            if view["status"] != "completed":
                raise FabricError(
                    f"quickstart task {task_id} {view['status']}: "
                    f"{view.get('error_detail') or 'timed out'}")
            header, tensor = frames.split_payload(broker.get_result(task_id))
            outputs[worker.profile.precision] = frames.decode_tensor(
                tensor, header["shape"], header["element_type"])

        _, truths = patches_to_arrays(sample_patches)
        predictions = outputs[precisions[0]]
        distances = euclidean_errors(np.asarray(predictions, dtype=np.float64),
                                     np.asarray(truths, dtype=np.float64))
        report = error_stats(distances, trust_threshold=config.trust_threshold_px)
        _, justification = trust_gate(report)
        _say(f"      uq: mean {report.mean_error:.3f} px, "
             f"p95 {report.p95_error:.3f} px -> {justification}")
        if len(outputs) >= 2:
            pair = sorted(outputs)
            consistency = consistency_check(
                np.asarray(outputs[pair[0]], dtype=np.float64),
                np.asarray(outputs[pair[1]], dtype=np.float64),
                tolerance=config.consistency_tolerance)
            _say(f"      consistency {pair[0]} vs {pair[1]}: max |delta| "
                 f"{consistency.max_abs_deviation:.3g} "
                 f"({'pass' if consistency.passed else 'FAIL'})")

        _say("[7/7] grading FAIR propositions")
        fair = fairmod.fair_report(model_id, registry, broker,
                                   tolerance=config.consistency_tolerance,
                                   timeout_s=config.task_timeout_s)
        (work / "fair-report.json").write_text(fair.render_machine(),
                                               encoding="utf-8")
        for line in fair.summary_lines()[:-1]:
            _say("      " + line)
        overall = fair.overall
    finally:
        for worker in workers:
            worker.close()

    print(f"FAIR overall: {'PASS' if overall else 'FAIL'}")
    return 0 if overall else 1


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairfab",
        description="FAIR fabric: bags, model registry, task fabric, and "
                    "FAIR Pass/Fail checks.")
    parser.add_argument("--machine", action="store_true",
                        help="machine metadata output on stdout")
    parser.add_argument("--config", help="config file (machine metadata format)")
    parser.add_argument("--registry-url", dest="registry_url")
    parser.add_argument("--broker-url", dest="broker_url")
    parser.add_argument("--store", dest="store_path",
                        help="local store root (when no registry URL is set)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_bag = sub.add_parser("bag", help="create, validate, and mint bags")
    bag_sub = p_bag.add_subparsers(dest="bag_command", required=True)
    p = bag_sub.add_parser("create")
    p.add_argument("source")
    p.add_argument("dest")
    p.add_argument("--algorithm", default="sha256", choices=["sha256", "sha512"])
    p.add_argument("--info", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=_cmd_bag_create)
    p = bag_sub.add_parser("validate")
    p.add_argument("path")
    p.set_defaults(handler=_cmd_bag_validate)
    p = bag_sub.add_parser("minid")
    p.add_argument("path")
    p.set_defaults(handler=_cmd_bag_minid)

    p = sub.add_parser("synth", help="synthesize a BPK1 patch file")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--truthless", action="store_true")
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", help="train TinyNet on a BPK1 file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--momentum", type=float, default=TrainConfig.momentum)
    p.add_argument("--patience", type=int, default=TrainConfig.patience)
    p.add_argument("--val-fraction", dest="validation_fraction", type=float,
                   default=TrainConfig.validation_fraction)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("export", help="package weights as a servable archive")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_export)

    p = sub.add_parser("serve", help="host the registry or broker REST API")
    p.add_argument("service", choices=["registry", "broker"])
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8601)
    p.set_defaults(handler=_cmd_serve)

    p_ep = sub.add_parser("endpoint", help="run a worker endpoint")
    ep_sub = p_ep.add_subparsers(dest="endpoint_command", required=True)
    p = ep_sub.add_parser("run")
    p.add_argument("--name", required=True)
    p.add_argument("--precision", default="strict-f32",
                   choices=["strict-f32", "f64-accumulate"])
    p.add_argument("--slots", type=int, default=1)
    p.add_argument("--max-seconds", type=float, default=None,
                   help="drain the queue then exit (default: serve forever)")
    p.set_defaults(handler=_cmd_endpoint_run)

    p_pub = sub.add_parser("publish", help="publish a model or dataset")
    pub_sub = p_pub.add_subparsers(dest="publish_command", required=True)
    p = pub_sub.add_parser("model")
    p.add_argument("--record", required=True)
    p.add_argument("--servable", required=True)
    p.set_defaults(handler=_cmd_publish_model)
    p = pub_sub.add_parser("dataset")
    p.add_argument("--record", required=True)
    p.add_argument("--bag", required=True)
    p.set_defaults(handler=_cmd_publish_dataset)

    p = sub.add_parser("get", help="fetch entry metadata")
    p.add_argument("identifier")
    p.set_defaults(handler=_cmd_get)

    p = sub.add_parser("withdraw", help="tombstone an entry's artifact")
    p.add_argument("identifier")
    p.set_defaults(handler=_cmd_withdraw)

    p = sub.add_parser("search", help="search published entries")
    p.add_argument("query")
    p.set_defaults(handler=_cmd_search)

    p = sub.add_parser("invoke", help="submit an inference task")
    p.add_argument("--model", required=True)
    p.add_argument("--input", help="BPK1 file sent inline")
    p.add_argument("--dataset", help="published dataset identifier")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--out", default=None, help="write the result payload here")
    p.add_argument("--no-wait", action="store_true")
    p.set_defaults(handler=_cmd_invoke)

    p = sub.add_parser("status", help="poll a task")
    p.add_argument("task_id")
    p.set_defaults(handler=_cmd_status)

    p = sub.add_parser("result", help="download a task result payload")
    p.add_argument("task_id")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_result)

    p_uq = sub.add_parser("uq", help="uncertainty quantification")
    uq_sub = p_uq.add_subparsers(dest="uq_command", required=True)
    p = uq_sub.add_parser("report")
    p.add_argument("--predictions", required=True,
                   help="result payload file from `result --out`")
    p.add_argument("--data", required=True, help="BPK1 file carrying truths")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(handler=_cmd_uq_report)

    p = sub.add_parser("faircheck", help="grade a model FAIR Pass/Fail")
    p.add_argument("identifier")
    p.set_defaults(handler=_cmd_faircheck)

    p = sub.add_parser("quickstart",
                       help="end-to-end demo: synth, train, publish, invoke, grade")
    p.add_argument("--work", default=None)
    p.add_argument("--seed", type=int, default=QUICKSTART_SEED)
    p.add_argument("--train-count", type=int, default=2000)
    p.add_argument("--sample-count", type=int, default=256)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--profiles", default="strict-f32,f64-accumulate")
    p.set_defaults(handler=_cmd_quickstart)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(
            flags={"registry_url": args.registry_url,
                   "broker_url": args.broker_url,
                   "store_path": args.store_path},
            config_path=args.config)
        return args.handler(args, config)
    except (FabricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
