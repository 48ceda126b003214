"""REST surfaces over the registry and broker.

Domain errors map onto statuses: validation 422, not found 404,
conflict/integrity 409, withdrawn 410, wrong endpoint 403. Error bodies
carry a machine-readable ``kind`` so clients can re-raise the exact
class on their side of the wire.
"""

from __future__ import annotations

import base64
import io
import tempfile
import zipfile
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..errors import (
    ConflictError,
    FabricError,
    ForbiddenError,
    GoneError,
    IntegrityError,
    NotFoundError,
    ValidationError,
)

_STATUS = {
    ValidationError: 422,
    NotFoundError: 404,
    ConflictError: 409,
    IntegrityError: 409,
    GoneError: 410,
    ForbiddenError: 403,
}

ERROR_KINDS = {
    "validation": ValidationError,
    "not-found": NotFoundError,
    "conflict": ConflictError,
    "integrity": IntegrityError,
    "gone": GoneError,
    "forbidden": ForbiddenError,
}
_KIND_OF = {cls: kind for kind, cls in ERROR_KINDS.items()}


def _error_response(exc: FabricError) -> JSONResponse:
    for cls in type(exc).__mro__:
        if cls in _STATUS:
            return JSONResponse(status_code=_STATUS[cls],
                                content={"detail": str(exc), "kind": _KIND_OF[cls]})
    return JSONResponse(status_code=500, content={"detail": str(exc), "kind": "internal"})


def _install_handlers(app: FastAPI) -> None:
    @app.exception_handler(FabricError)
    async def _fabric_error(request: Request, exc: FabricError):
        return _error_response(exc)


# -- registry ---------------------------------------------------------------


class PublishModelBody(BaseModel):
    record: dict
    servable_b64: str


class PublishDatasetBody(BaseModel):
    record: dict
    bag_zip_b64: str


def create_registry_app(registry) -> FastAPI:
    app = FastAPI(title="fairfab registry", docs_url=None, redoc_url=None)
    _install_handlers(app)

    @app.post("/models", status_code=201)
    def publish_model(body: PublishModelBody):
        servable = base64.b64decode(body.servable_b64)
        identifier = registry.publish_model(body.record, servable)
        return {"identifier": identifier}

    @app.post("/datasets", status_code=201)
    def publish_dataset(body: PublishDatasetBody):
        blob = base64.b64decode(body.bag_zip_b64)
        with tempfile.TemporaryDirectory(prefix="fairfab-bag-") as scratch:
            bag_dir = Path(scratch) / "bag"
            bag_dir.mkdir()
            with zipfile.ZipFile(io.BytesIO(blob)) as archive:
                for name in archive.namelist():
                    target = bag_dir / name
                    if not target.resolve().is_relative_to(bag_dir.resolve()):
                        raise ValidationError(f"unsafe archive member: {name}")
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_bytes(archive.read(name))
            identifier = registry.publish_dataset(body.record, bag_dir)
        return {"identifier": identifier}

    @app.get("/entries/{identifier:path}/artifact")
    def download_artifact(identifier: str):
        blob = registry.download_artifact(identifier)
        return Response(content=blob, media_type="application/zip")

    @app.delete("/entries/{identifier:path}/artifact")
    def withdraw(identifier: str):
        return registry.withdraw(identifier)

    @app.get("/entries/{identifier:path}")
    def get_metadata(identifier: str):
        return registry.get_metadata(identifier)

    @app.get("/search")
    def search(q: str = ""):
        return {"hits": registry.search(q)}

    return app


# -- broker -------------------------------------------------------------------


class RegisterEndpointBody(BaseModel):
    name: str
    profile: dict


class HeartbeatBody(BaseModel):
    running_task_ids: list[str] = []


class LeaseBody(BaseModel):
    max_tasks: int = 1


class SubmitTaskBody(BaseModel):
    model_identifier: str
    input_reference: dict
    requested_endpoint: str | None = None
    marker: str | None = None


class ReportResultBody(BaseModel):
    endpoint_id: str
    status: str
    result_b64: str | None = None
    error_detail: str | None = None


def create_broker_app(broker) -> FastAPI:
    from ..tasking.broker import ExecutionProfile

    app = FastAPI(title="fairfab broker", docs_url=None, redoc_url=None)
    _install_handlers(app)

    @app.post("/endpoints", status_code=201)
    def register_endpoint(body: RegisterEndpointBody):
        profile = ExecutionProfile(**body.profile)
        return {"endpoint_id": broker.register_endpoint(body.name, profile)}

    @app.get("/endpoints")
    def list_endpoints():
        return {"endpoints": broker.list_endpoints()}

    @app.post("/endpoints/{endpoint_id}/heartbeat")
    def heartbeat(endpoint_id: str, body: HeartbeatBody):
        return broker.heartbeat(endpoint_id, body.running_task_ids)

    @app.post("/endpoints/{endpoint_id}/lease")
    def lease(endpoint_id: str, body: LeaseBody):
        return {"leases": broker.lease_tasks(endpoint_id, body.max_tasks)}

    @app.post("/tasks", status_code=201)
    def submit_task(body: SubmitTaskBody):
        task_id = broker.submit_task(body.model_identifier, body.input_reference,
                                     requested_endpoint=body.requested_endpoint,
                                     marker=body.marker)
        return {"task_id": task_id}

    @app.get("/tasks/{task_id}/result")
    def get_result(task_id: str):
        blob = broker.get_result(task_id)
        return Response(content=blob, media_type="application/octet-stream")

    @app.post("/tasks/{task_id}/result")
    def report_result(task_id: str, body: ReportResultBody):
        result = base64.b64decode(body.result_b64) if body.result_b64 is not None else None
        return broker.report_result(body.endpoint_id, task_id, body.status,
                                    result=result, error_detail=body.error_detail)

    @app.get("/tasks/{task_id}")
    def poll_task(task_id: str):
        return broker.poll_task(task_id)

    return app
