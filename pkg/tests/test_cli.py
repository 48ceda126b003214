"""Command line surface: workflows, exit codes, --machine output, and
configuration precedence. One test runs the full loop over real sockets."""

import hashlib
import json
import threading
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import build_reference_stack, dataset_record, make_servable, model_record
from fairfab.cli import main
from fairfab.config import (
    DEFAULT_CONSISTENCY_TOLERANCE,
    DEFAULT_TRUST_THRESHOLD_PX,
    load_config,
)
from fairfab.errors import ConfigurationError
from fairfab.metadata import IOSignature
from fairfab.peaks.patches import read_bpk1_arrays
from fairfab.tasking import frames


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# -- bags -------------------------------------------------------------------------


@pytest.fixture
def bagged(tmp_path, capsys):
    source = tmp_path / "src"
    source.mkdir()
    code, _, _ = run(capsys, "synth", "--out", str(source / "patches.bpk1"),
                     "--count", "12", "--seed", "7")
    assert code == 0
    bag = tmp_path / "bag"
    code, out, _ = run(capsys, "--machine", "bag", "create", str(source), str(bag))
    assert code == 0
    return bag, json.loads(out)


def test_bag_create_reports_minid(bagged):
    bag, doc = bagged
    assert doc["payload_files"] == 1
    assert doc["algorithm"] == "sha256"
    assert doc["minid"].startswith("minid:")
    assert len(doc["minid"]) == len("minid:") + 12


def test_bag_minid_matches_create(bagged, capsys):
    bag, doc = bagged
    code, out, _ = run(capsys, "bag", "minid", str(bag))
    assert code == 0
    assert out.strip() == doc["minid"]
    code, out, _ = run(capsys, "--machine", "bag", "minid", str(bag))
    minted = json.loads(out)
    assert minted["minid"] == doc["minid"]
    assert len(minted["source_digest"]) == 64


def test_bag_validate_clean(bagged, capsys):
    bag, _ = bagged
    code, out, _ = run(capsys, "bag", "validate", str(bag))
    assert code == 0
    assert "valid" in out


def test_bag_validate_corrupted_names_the_path(bagged, capsys):
    bag, _ = bagged
    payload = bag / "data" / "patches.bpk1"
    payload.write_bytes(payload.read_bytes() + b"tamper")
    code, out, _ = run(capsys, "bag", "validate", str(bag))
    assert code == 1
    assert "INVALID" in out
    assert "corrupted: data/patches.bpk1" in out

    code, out, _ = run(capsys, "--machine", "bag", "validate", str(bag))
    assert code == 1
    doc = json.loads(out)
    assert doc["valid"] is False
    assert doc["corrupted_files"][0]["path"] == "data/patches.bpk1"


def test_bag_create_rejects_malformed_info(tmp_path, capsys):
    source = tmp_path / "src"
    source.mkdir()
    (source / "a.txt").write_text("a\n")
    code, _, err = run(capsys, "bag", "create", str(source), str(tmp_path / "b"),
                       "--info", "missing-equals")
    assert code == 1
    assert err.startswith("error:")
    assert "KEY=VALUE" in err


def test_filesystem_failure_is_a_diagnostic_not_a_traceback(tmp_path, capsys):
    missing = tmp_path / "absent-dir" / "patches.bpk1"
    code, _, err = run(capsys, "synth", "--out", str(missing), "--count", "4")
    assert code == 1
    assert err.startswith("error:")
    assert "absent-dir" in err


# -- peaks workflow -----------------------------------------------------------------


def test_synth_train_export_round_trip(tmp_path, capsys):
    data = tmp_path / "train.bpk1"
    code, out, _ = run(capsys, "--machine", "synth", "--out", str(data),
                       "--count", "64", "--seed", "3")
    assert code == 0
    assert json.loads(out)["count"] == 64
    inputs, truths = read_bpk1_arrays(data)
    assert inputs.shape == (64, 1, 11, 11)
    assert not np.isnan(truths).any()

    weights = tmp_path / "weights.npz"
    code, out, _ = run(capsys, "--machine", "train", "--data", str(data),
                       "--out", str(weights), "--epochs", "2", "--batch-size", "16")
    assert code == 0
    log = json.loads(out)
    assert log["stopped_epoch"] == 2
    assert log["val_mean_error_px"] > 0
    assert weights.is_file()

    servable = tmp_path / "servable.zip"
    code, out, _ = run(capsys, "--machine", "export", "--weights", str(weights),
                       "--out", str(servable))
    assert code == 0
    doc = json.loads(out)
    assert doc["servable_digest"] == hashlib.sha256(servable.read_bytes()).hexdigest()


def test_synth_truthless_writes_nan_truths(tmp_path, capsys):
    data = tmp_path / "blind.bpk1"
    code, _, _ = run(capsys, "synth", "--out", str(data), "--count", "5",
                     "--seed", "1", "--truthless")
    assert code == 0
    _, truths = read_bpk1_arrays(data)
    assert np.isnan(truths).all()


# -- publication workflow --------------------------------------------------------------


def test_publish_get_search_withdraw_workflow(tmp_path, capsys):
    store = str(tmp_path / "store")
    source = tmp_path / "src"
    source.mkdir()
    run(capsys, "synth", "--out", str(source / "patches.bpk1"),
        "--count", "20", "--seed", "2")
    bag = tmp_path / "bag"
    _, out, _ = run(capsys, "--machine", "bag", "create", str(source), str(bag))
    minid = json.loads(out)["minid"]

    ds_record = tmp_path / "dataset.json"
    ds_record.write_text(json.dumps(dataset_record("Workflow patch bag", minid)))
    code, out, _ = run(capsys, "--machine", "--store", store, "publish", "dataset",
                       "--record", str(ds_record), "--bag", str(bag))
    assert code == 0
    ds_id = json.loads(out)["identifier"]
    assert ds_id.startswith("local-doi:")

    servable, digest = make_servable()
    servable_path = tmp_path / "servable.zip"
    servable_path.write_bytes(servable)
    model_path = tmp_path / "model.json"
    model_path.write_text(json.dumps(model_record(digest, training_dataset_id=ds_id)))
    code, out, _ = run(capsys, "--machine", "--store", store, "publish", "model",
                       "--record", str(model_path), "--servable", str(servable_path))
    assert code == 0
    model_id = json.loads(out)["identifier"]

    # resolve by primary id and by the bag's minid
    code, out, _ = run(capsys, "--store", store, "get", model_id)
    assert code == 0
    assert "TinyNet localizer fixture" in out
    assert "state: published" in out
    code, out, _ = run(capsys, "--machine", "--store", store, "get", minid)
    assert code == 0
    assert json.loads(out)["identifier"] == ds_id

    code, out, _ = run(capsys, "--store", store, "search", "localizer")
    assert code == 0
    assert model_id in out

    code, out, _ = run(capsys, "--store", store, "withdraw", ds_id)
    assert code == 0
    assert "metadata remains resolvable" in out
    code, out, _ = run(capsys, "--machine", "--store", store, "get", ds_id)
    assert json.loads(out)["state"] == "withdrawn"
    code, out, _ = run(capsys, "--store", store, "search", "workflow")
    assert "[withdrawn]" in out

    code, out, _ = run(capsys, "--store", store, "faircheck", model_id)
    assert code == 1
    assert "FAIR overall: FAIL" in out
    assert "no endpoint online" in out


def test_get_unknown_identifier_fails(tmp_path, capsys):
    code, _, err = run(capsys, "--store", str(tmp_path / "s"), "get",
                       "local-doi:10.99999/00000000")
    assert code == 1
    assert err.startswith("error:")


def test_search_no_matches(tmp_path, capsys):
    code, out, _ = run(capsys, "--store", str(tmp_path / "s"), "search", "nothing")
    assert code == 0
    assert "no matches" in out


# -- invocation ------------------------------------------------------------------------


def test_invoke_shape_mismatch_cites_signature(tmp_path, capsys):
    stack = build_reference_stack(tmp_path / "stack")
    wide = stack.registry.publish_model(
        model_record(stack.digest, training_dataset_id=stack.train_id,
                     input_signature=IOSignature("float32", (None, 1, 12, 12)),
                     title="Wide input fixture"),
        stack.servable)
    data = tmp_path / "probe.bpk1"
    run(capsys, "synth", "--out", str(data), "--count", "3", "--seed", "4")
    code, _, err = run(capsys, "--store", str(tmp_path / "stack"), "invoke",
                       "--model", wide, "--input", str(data))
    assert code == 1
    assert "dimension 2: expected 12, got 11" in err


def test_invoke_requires_an_input_source(tmp_path, capsys):
    stack = build_reference_stack(tmp_path / "stack")
    code, _, err = run(capsys, "--store", str(tmp_path / "stack"), "invoke",
                       "--model", stack.model_id)
    assert code == 1
    assert "--input" in err and "--dataset" in err


def test_invoke_no_wait_submits(tmp_path, capsys):
    stack = build_reference_stack(tmp_path / "stack")
    code, out, _ = run(capsys, "--machine", "--store", str(tmp_path / "stack"),
                       "invoke", "--model", stack.model_id,
                       "--dataset", stack.sample_id, "--count", "4", "--no-wait")
    assert code == 0
    doc = json.loads(out)
    assert doc["task_id"] == "task-000001"
    assert doc["status"] == "pending"


# -- served fabric over real sockets -----------------------------------------------------


@contextmanager
def served(app):
    import uvicorn

    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not come up")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=15)


def test_served_fabric_round_trip(tmp_path, capsys):
    from fairfab.http import create_broker_app, create_registry_app
    from fairfab.http.clients import RegistryClient
    from fairfab.tasking.broker import Broker

    stack = build_reference_stack(tmp_path / "stack", sample_count=8)
    with served(create_registry_app(stack.registry)) as registry_url:
        broker = Broker(RegistryClient(base_url=registry_url))
        with served(create_broker_app(broker)) as broker_url:
            urls = ["--registry-url", registry_url, "--broker-url", broker_url]

            code, out, _ = run(capsys, *urls, "invoke", "--model", stack.model_id,
                               "--dataset", stack.sample_id, "--count", "8",
                               "--no-wait")
            assert code == 0
            task_id = out.split()[-1]

            code, _, err = run(capsys, *urls, "endpoint", "run", "--name", "sock-ep",
                               "--max-seconds", "20")
            assert code == 0
            assert "processed 1 tasks" in err

            code, out, _ = run(capsys, *urls, "status", task_id)
            assert code == 0
            assert "completed" in out

            payload_path = tmp_path / "payload.bin"
            code, out, _ = run(capsys, *urls, "result", task_id,
                               "--out", str(payload_path))
            assert code == 0
            header, tensor = frames.split_payload(payload_path.read_bytes())
            assert header["shape"] == [8, 2]

            code, _, err = run(capsys, *urls, "status", "task-999999")
            assert code == 1
            assert err.startswith("error:")

    data = stack.sample_bag / "data" / "patches.bpk1"
    code, out, _ = run(capsys, "--machine", "uq", "report",
                       "--predictions", str(payload_path), "--data", str(data),
                       "--count", "8")
    assert code == 0
    doc = json.loads(out)
    assert doc["n"] == 8
    assert doc["verdict"] in ("trusted", "untrusted")
    assert doc["trust_threshold"] == DEFAULT_TRUST_THRESHOLD_PX

    code, out, _ = run(capsys, "uq", "report", "--predictions", str(payload_path),
                       "--data", str(data), "--count", "8",
                       "--threshold", "1000")
    assert code == 0
    assert "-> trusted" in out


def test_uq_report_rejects_truthless_data(tmp_path, capsys):
    data = tmp_path / "blind.bpk1"
    run(capsys, "synth", "--out", str(data), "--count", "4", "--seed", "6",
        "--truthless")
    predictions = np.zeros((4, 2), dtype=np.float32)
    header, tensor = frames.ok_response(predictions)
    payload_path = tmp_path / "payload.bin"
    payload_path.write_bytes(frames.encode_payload(header, tensor))
    code, _, err = run(capsys, "uq", "report", "--predictions", str(payload_path),
                       "--data", str(data))
    assert code == 1
    assert "no ground truth" in err


# -- configuration ------------------------------------------------------------------------


def test_config_defaults():
    config = load_config(env={})
    assert config.trust_threshold_px == DEFAULT_TRUST_THRESHOLD_PX == 0.688
    assert config.consistency_tolerance == DEFAULT_CONSISTENCY_TOLERANCE == 1e-5
    assert config.registry_url == ""


def test_config_precedence_flags_env_file(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({"trust_threshold_px": 0.2,
                                       "store_path": "from-file",
                                       "task_timeout_s": 10}))
    # file alone
    config = load_config(env={}, config_path=config_file)
    assert config.trust_threshold_px == 0.2
    assert config.store_path == "from-file"
    # environment beats file
    env = {"FAIRFAB_TRUST_THRESHOLD_PX": "0.3", "FAIRFAB_STORE_PATH": "from-env"}
    config = load_config(env=env, config_path=config_file)
    assert config.trust_threshold_px == 0.3
    assert config.store_path == "from-env"
    assert config.task_timeout_s == 10  # file survives where env is silent
    # flags beat environment
    config = load_config(flags={"store_path": "from-flag"}, env=env,
                         config_path=config_file)
    assert config.store_path == "from-flag"
    assert config.trust_threshold_px == 0.3


def test_config_file_discovered_from_environment(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({"task_timeout_s": 7}))
    config = load_config(env={"FAIRFAB_CONFIG": str(config_file)})
    assert config.task_timeout_s == 7


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(env={"FAIRFAB_TASK_TIMEOUT_S": "soon"})
    with pytest.raises(ConfigurationError):
        load_config(env={"FAIRFAB_TRUST_THRESHOLD_PX": "-1"})
    with pytest.raises(ConfigurationError):
        load_config(flags={"registry_url": "not a url"}, env={})
    with pytest.raises(ConfigurationError):
        load_config(config_path=tmp_path / "absent.json", env={})
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        load_config(config_path=bad, env={})


def test_cli_store_flag_beats_environment(tmp_path, capsys, monkeypatch):
    stack = build_reference_stack(tmp_path / "stack")
    monkeypatch.setenv("FAIRFAB_STORE_PATH", str(tmp_path / "stack"))
    code, out, _ = run(capsys, "get", stack.model_id)
    assert code == 0

    code, _, err = run(capsys, "--store", str(tmp_path / "empty"), "get",
                       stack.model_id)
    assert code == 1
    assert err.startswith("error:")


# -- usage errors -----------------------------------------------------------------------


def test_unknown_command_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["frobnicate"])
    assert excinfo.value.code == 2


def test_bag_requires_a_subcommand(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["bag"])
    assert excinfo.value.code == 2
