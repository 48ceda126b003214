"""Endpoint worker: leases tasks from a broker, resolves inputs and
servables through a registry, executes in the subprocess sandbox, and
reports results.

`broker` and `registry` are duck typed; in-process objects and HTTP
clients expose the same methods, so the worker does not care which side
of a network boundary it runs on.
"""

from __future__ import annotations

import base64
import hashlib
import io
import threading
import time
import zipfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import IntegrityError, ValidationError
from ..peaks.patches import decode_bpk1
from . import frames
from .broker import ExecutionProfile
from .sandbox import DEFAULT_TIMEOUT_S, ServableExecutionError, execute_servable


class EndpointWorker:
    def __init__(self, broker, registry, name: str,
                 profile: ExecutionProfile | None = None,
                 timeout_s: float = DEFAULT_TIMEOUT_S,
                 poll_interval_s: float = 0.05):
        self.broker = broker
        self.registry = registry
        self.name = name
        self.profile = profile or ExecutionProfile()
        self.profile.validate()
        self.timeout_s = timeout_s
        self.poll_interval_s = poll_interval_s
        self.endpoint_id = broker.register_endpoint(name, self.profile)
        self._servables: dict[str, bytes] = {}
        self._datasets: dict[str, bytes] = {}
        self._pool = ThreadPoolExecutor(max_workers=self.profile.slots)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- artifact resolution -------------------------------------------------

    def _servable_blob(self, model_identifier: str) -> bytes:
        cached = self._servables.get(model_identifier)
        if cached is not None:
            return cached
        meta = self.registry.get_metadata(model_identifier)
        declared = meta["record"].get("servable_digest", "")
        blob = self.registry.download_artifact(model_identifier)
        actual = hashlib.sha256(blob).hexdigest()
        if declared and actual != declared:
            raise IntegrityError(
                f"servable digest mismatch for {model_identifier}: "
                f"declared {declared}, downloaded {actual}")
        self._servables[model_identifier] = blob
        return blob

    def _dataset_blob(self, identifier: str) -> bytes:
        cached = self._datasets.get(identifier)
        if cached is None:
            cached = self.registry.download_artifact(identifier)
            self._datasets[identifier] = cached
        return cached

    def _resolve_input(self, reference: dict) -> np.ndarray:
        if reference["kind"] == "inline":
            data = base64.b64decode(reference["data_b64"])
            return frames.decode_tensor(data, [int(d) for d in reference["shape"]],
                                        reference["element_type"])
        blob = self._dataset_blob(reference["identifier"])
        with zipfile.ZipFile(io.BytesIO(blob)) as archive:
            members = [n for n in archive.namelist() if n.endswith(".bpk1")]
            if not members:
                raise ValidationError(
                    f"dataset {reference['identifier']} carries no .bpk1 payload")
            data = archive.read(sorted(members)[0])
        x, _ = decode_bpk1(data, reference["start"], reference["count"])
        return x

    # -- execution -----------------------------------------------------------

    def _execute(self, lease: dict) -> None:
        task_id = lease["task_id"]
        try:
            x = self._resolve_input(lease["input_reference"])
            blob = self._servable_blob(lease["model_identifier"])
            header, tensor = frames.inference_request(
                lease["model_identifier"], x, profile=self.profile.precision)
            result = execute_servable(blob, header, tensor,
                                      profile=self.profile.precision,
                                      timeout=self.timeout_s)
        except ServableExecutionError as exc:
            self.broker.report_result(self.endpoint_id, task_id, "failed",
                                      error_detail=f"{exc.kind}: {exc}")
            return
        except Exception as exc:
            self.broker.report_result(self.endpoint_id, task_id, "failed",
                                      error_detail=f"input: {exc}")
            return
        self.broker.report_result(self.endpoint_id, task_id, "completed",
                                  result=result.payload)

    def run_cycle(self) -> int:
        """Lease up to `slots` tasks, execute them, report. Returns the count."""
        leases = self.broker.lease_tasks(self.endpoint_id, self.profile.slots)
        if not leases:
            self.broker.heartbeat(self.endpoint_id)
            return 0
        self.broker.heartbeat(self.endpoint_id,
                              running_task_ids=[l["task_id"] for l in leases])
        futures = [self._pool.submit(self._execute, lease) for lease in leases]
        for future in futures:
            future.result()
        return len(leases)

    def run_until_idle(self, idle_cycles: int = 2, max_seconds: float = 300.0) -> int:
        """Cycle until the queue stays empty for `idle_cycles` polls."""
        deadline = time.monotonic() + max_seconds
        done = 0
        empty = 0
        while empty < idle_cycles and time.monotonic() < deadline:
            processed = self.run_cycle()
            done += processed
            if processed:
                empty = 0
            else:
                empty += 1
                time.sleep(self.poll_interval_s)
        return done

    # -- background serving ----------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._serve, daemon=True,
                                        name=f"worker-{self.name}")
        self._thread.start()

    def _serve(self) -> None:
        while not self._stop.is_set():
            if self.run_cycle() == 0:
                self._stop.wait(self.poll_interval_s)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=30)
            self._thread = None

    def close(self) -> None:
        self.stop()
        self._pool.shutdown(wait=True)
