"""Pull-based task broker: submit, lease with expiry, heartbeat liveness,
idempotent result reporting, and status polling.

All state is in memory and guarded by one lock; per-task transitions are
therefore serialized. The clock is injectable so lease expiry and
liveness are testable without sleeping.
"""

from __future__ import annotations

import base64
import hashlib
import threading
import time
from dataclasses import dataclass, field

from ..errors import (
    ConflictError,
    ForbiddenError,
    GoneError,
    IntegrityError,
    NotFoundError,
    ValidationError,
)
from ..metadata import from_document
from . import frames

DEFAULT_LEASE_WINDOW_S = 60.0
DEFAULT_LIVENESS_WINDOW_S = 30.0
INLINE_INPUT_CAP_BYTES = 64 << 20

PENDING = "pending"
LEASED = "leased"
RUNNING = "running"
COMPLETED = "completed"
FAILED = "failed"
LEGAL_CHAIN = (PENDING, LEASED, RUNNING, COMPLETED, FAILED)

PRECISION_MODES = ("strict-f32", "f64-accumulate")


@dataclass(frozen=True)
class ExecutionProfile:
    precision: str = "strict-f32"
    slots: int = 1

    def validate(self) -> None:
        if self.precision not in PRECISION_MODES:
            raise ValidationError(f"unknown precision mode: {self.precision!r}")
        if self.slots < 1:
            raise ValidationError(f"worker slots must be >= 1, got {self.slots}")

    def to_document(self) -> dict:
        return {"precision": self.precision, "slots": self.slots}


@dataclass
class _Endpoint:
    endpoint_id: str
    name: str
    profile: ExecutionProfile
    last_heartbeat: float


@dataclass
class _Task:
    task_id: str
    model_identifier: str
    input_reference: dict
    requested_endpoint: str | None
    marker: str | None
    status: str
    submitted_at: float
    attempts: int = 0
    leased_by: str | None = None
    lease_expires: float = 0.0
    result: bytes | None = None
    result_digest: str | None = None
    error_detail: str | None = None
    completed_at: float | None = None
    history: list[tuple[str, float]] = field(default_factory=list)


def _shape_of(reference_shape, signature) -> None:
    want = signature.shape
    got = list(reference_shape)
    if len(got) != len(want):
        raise ValidationError(
            f"input rank {len(got)} does not match signature rank {len(want)}")
    for i, (expected, actual) in enumerate(zip(want, got)):
        if i == 0 and expected is None:
            if not (isinstance(actual, int) and actual >= 1):
                raise ValidationError(f"input_signature dimension 0: batch must be >= 1, "
                                      f"got {actual!r}")
            continue
        if actual != expected:
            raise ValidationError(
                f"input_signature dimension {i}: expected {expected}, got {actual}")


class Broker:
    """In-memory broker; `registry` answers get_metadata(identifier)."""

    def __init__(self, registry, clock=time.time,
                 lease_window: float = DEFAULT_LEASE_WINDOW_S,
                 liveness_window: float = DEFAULT_LIVENESS_WINDOW_S,
                 inline_cap: int = INLINE_INPUT_CAP_BYTES):
        self._registry = registry
        self._clock = clock
        self.lease_window = lease_window
        self.liveness_window = liveness_window
        self.inline_cap = inline_cap
        self._lock = threading.RLock()
        self._endpoints: dict[str, _Endpoint] = {}
        self._tasks: dict[str, _Task] = {}
        self._task_order: list[str] = []
        self._counter = 0

    # -- endpoints ---------------------------------------------------------

    def register_endpoint(self, name: str, profile: ExecutionProfile) -> str:
        profile.validate()
        if not name:
            raise ValidationError("endpoint name must be non-empty")
        with self._lock:
            if any(ep.name == name for ep in self._endpoints.values()):
                raise ConflictError(f"endpoint name already registered: {name!r}")
            endpoint_id = "ep-" + hashlib.sha256(name.encode()).hexdigest()[:8]
            self._endpoints[endpoint_id] = _Endpoint(
                endpoint_id=endpoint_id, name=name, profile=profile,
                last_heartbeat=self._clock())
            return endpoint_id

    def _endpoint(self, endpoint_id: str) -> _Endpoint:
        endpoint = self._endpoints.get(endpoint_id)
        if endpoint is None:
            raise NotFoundError(f"unknown endpoint: {endpoint_id}")
        return endpoint

    def _state_of(self, endpoint: _Endpoint) -> str:
        age = self._clock() - endpoint.last_heartbeat
        return "online" if age <= self.liveness_window else "offline"

    def heartbeat(self, endpoint_id: str, running_task_ids=()) -> dict:
        with self._lock:
            endpoint = self._endpoint(endpoint_id)
            now = self._clock()
            endpoint.last_heartbeat = now
            for task_id in running_task_ids:
                task = self._tasks.get(task_id)
                if task is None or task.leased_by != endpoint_id:
                    continue
                if task.status == LEASED:
                    self._transition(task, RUNNING)
                if task.status in (LEASED, RUNNING):
                    task.lease_expires = now + self.lease_window
            return {"endpoint_id": endpoint_id, "state": self._state_of(endpoint)}

    def endpoint_view(self, endpoint_id: str) -> dict:
        with self._lock:
            endpoint = self._endpoint(endpoint_id)
            outstanding = sum(1 for t in self._tasks.values()
                              if t.leased_by == endpoint_id and t.status in (LEASED, RUNNING))
            return {"endpoint_id": endpoint.endpoint_id, "name": endpoint.name,
                    "profile": endpoint.profile.to_document(),
                    "state": self._state_of(endpoint),
                    "last_heartbeat": endpoint.last_heartbeat,
                    "outstanding_leases": outstanding}

    def list_endpoints(self) -> list[dict]:
        with self._lock:
            return sorted((self.endpoint_view(eid) for eid in self._endpoints),
                          key=lambda v: v["name"])

    # -- submission --------------------------------------------------------

    def _model_signatures(self, model_identifier: str):
        meta = self._registry.get_metadata(model_identifier)
        record_doc = meta["record"]
        if record_doc.get("record_type") != "model":
            raise ValidationError(f"{model_identifier} is not a model")
        if meta.get("state") == "withdrawn":
            raise GoneError(f"model artifact withdrawn: {model_identifier}")
        record = from_document(record_doc)
        return record.input_signature, record.output_signature

    def _check_input_reference(self, reference: dict, input_signature) -> dict:
        if not isinstance(reference, dict) or reference.get("kind") not in ("inline", "dataset"):
            raise ValidationError("input_reference.kind must be 'inline' or 'dataset'")
        reference = dict(reference)
        if reference["kind"] == "inline":
            for key in ("element_type", "shape", "data_b64"):
                if key not in reference:
                    raise ValidationError(f"inline input_reference needs {key!r}")
            if reference["element_type"] != input_signature.element_type:
                raise ValidationError(
                    f"input element_type {reference['element_type']!r} does not match "
                    f"signature {input_signature.element_type!r}")
            try:
                data = base64.b64decode(reference["data_b64"], validate=True)
            except Exception as exc:
                raise ValidationError(f"inline data is not valid base64: {exc}") from exc
            if len(data) > self.inline_cap:
                raise ValidationError(
                    f"inline input of {len(data)} bytes exceeds the "
                    f"{self.inline_cap} byte cap; publish a dataset instead")
            _shape_of(reference["shape"], input_signature)
            try:
                frames.decode_tensor(data, [int(d) for d in reference["shape"]],
                                     reference["element_type"])
            except frames.FrameProtocolError as exc:
                raise ValidationError(f"inline data rejected: {exc}") from exc
        else:
            for key in ("identifier", "start", "count"):
                if key not in reference:
                    raise ValidationError(f"dataset input_reference needs {key!r}")
            if not (isinstance(reference["count"], int) and reference["count"] >= 1
                    and isinstance(reference["start"], int) and reference["start"] >= 0):
                raise ValidationError("dataset slice needs start >= 0 and count >= 1")
            meta = self._registry.get_metadata(reference["identifier"])
            if meta["record"].get("record_type") != "dataset":
                raise ValidationError(f"{reference['identifier']} is not a dataset")
            if meta.get("state") == "withdrawn":
                raise GoneError(f"dataset artifact withdrawn: {reference['identifier']}")
        return reference

    def submit_task(self, model_identifier: str, input_reference: dict,
                    requested_endpoint: str | None = None,
                    marker: str | None = None) -> str:
        input_signature, _ = self._model_signatures(model_identifier)
        reference = self._check_input_reference(input_reference, input_signature)
        with self._lock:
            if requested_endpoint is not None:
                self._endpoint(requested_endpoint)
            self._counter += 1
            task_id = f"task-{self._counter:06d}"
            now = self._clock()
            task = _Task(task_id=task_id, model_identifier=model_identifier,
                         input_reference=reference,
                         requested_endpoint=requested_endpoint, marker=marker,
                         status=PENDING, submitted_at=now)
            task.history.append((PENDING, now))
            self._tasks[task_id] = task
            self._task_order.append(task_id)
            return task_id

    # -- leasing and results -------------------------------------------------

    def _transition(self, task: _Task, status: str) -> None:
        task.status = status
        task.history.append((status, self._clock()))

    def _requeue_expired(self) -> None:
        now = self._clock()
        for task in self._tasks.values():
            if task.status in (LEASED, RUNNING) and task.lease_expires <= now:
                task.leased_by = None
                task.attempts += 1
                self._transition(task, PENDING)

    def lease_tasks(self, endpoint_id: str, max_tasks: int) -> list[dict]:
        if max_tasks < 1:
            raise ValidationError(f"max_tasks must be >= 1, got {max_tasks}")
        with self._lock:
            endpoint = self._endpoint(endpoint_id)
            if self._state_of(endpoint) != "online":
                raise ConflictError(f"endpoint {endpoint.name!r} is offline; "
                                    "heartbeat before leasing")
            self._requeue_expired()
            now = self._clock()
            granted = []
            for task_id in self._task_order:
                if len(granted) >= max_tasks:
                    break
                task = self._tasks[task_id]
                if task.status != PENDING:
                    continue
                if task.requested_endpoint not in (None, endpoint_id):
                    continue
                task.leased_by = endpoint_id
                task.lease_expires = now + self.lease_window
                self._transition(task, LEASED)
                granted.append({"task_id": task.task_id,
                                "model_identifier": task.model_identifier,
                                "input_reference": dict(task.input_reference),
                                "attempts": task.attempts,
                                "lease_expires": task.lease_expires})
            return granted

    def _task(self, task_id: str) -> _Task:
        task = self._tasks.get(task_id)
        if task is None:
            raise NotFoundError(f"unknown task: {task_id}")
        return task

    def report_result(self, endpoint_id: str, task_id: str, status: str,
                      result: bytes | None = None,
                      error_detail: str | None = None) -> dict:
        if status not in (COMPLETED, FAILED):
            raise ValidationError(f"reported status must be completed or failed: {status!r}")
        if status == COMPLETED and result is None:
            raise ValidationError("completed report needs a result blob")
        with self._lock:
            self._endpoint(endpoint_id)
            task = self._task(task_id)
            digest = hashlib.sha256(result).hexdigest() if result is not None else None

            if task.status in (COMPLETED, FAILED):
                if task.status == status == COMPLETED and task.result_digest == digest:
                    return {"task_id": task_id, "status": task.status, "idempotent": True}
                if task.status == status == FAILED and task.error_detail == error_detail:
                    return {"task_id": task_id, "status": task.status, "idempotent": True}
                raise IntegrityError(
                    f"task {task_id} already {task.status}; conflicting re-report rejected")

            if task.leased_by != endpoint_id:
                raise ForbiddenError(
                    f"task {task_id} is not leased by endpoint {endpoint_id}")

            if task.status == LEASED:
                self._transition(task, RUNNING)
            if status == COMPLETED:
                task.result = result
                task.result_digest = digest
            else:
                task.error_detail = error_detail or "unspecified failure"
            task.completed_at = self._clock()
            self._transition(task, status)
            return {"task_id": task_id, "status": task.status, "idempotent": False}

    # -- polling -------------------------------------------------------------

    def poll_task(self, task_id: str) -> dict:
        with self._lock:
            task = self._task(task_id)
            return {"task_id": task.task_id, "status": task.status,
                    "model_identifier": task.model_identifier,
                    "requested_endpoint": task.requested_endpoint,
                    "leased_by": task.leased_by, "attempts": task.attempts,
                    "marker": task.marker,
                    "result_digest": task.result_digest,
                    "error_detail": task.error_detail,
                    "submitted_at": task.submitted_at,
                    "completed_at": task.completed_at,
                    "history": [{"status": s, "at": t} for s, t in task.history]}

    def get_result(self, task_id: str) -> bytes:
        with self._lock:
            task = self._task(task_id)
            if task.status == COMPLETED:
                return task.result
            if task.status == FAILED:
                raise ConflictError(f"task failed: {task.error_detail}")
            raise ConflictError(f"result not ready: task is {task.status}")

    def list_tasks(self, include_markers: bool = True) -> list[dict]:
        with self._lock:
            views = [self.poll_task(task_id) for task_id in self._task_order]
        if not include_markers:
            views = [v for v in views if v["marker"] is None]
        return views
