"""httpx clients mirroring the in-process registry and broker methods.

Constructed either against a live base URL or directly against an ASGI
app (no socket), which keeps tests hermetic. Server error bodies carry a
``kind`` tag; clients re-raise the matching domain exception, so callers
cannot tell a client from the real object.
"""

from __future__ import annotations

import base64
import urllib.parse
from pathlib import Path

import httpx

from ..errors import (
    ConflictError,
    FabricError,
    ForbiddenError,
    GoneError,
    NotFoundError,
    ValidationError,
)
from ..registry import zip_directory
from .api import ERROR_KINDS

_STATUS_FALLBACK = {404: NotFoundError, 409: ConflictError, 410: GoneError,
                    403: ForbiddenError, 422: ValidationError}


def _quote(identifier: str) -> str:
    return urllib.parse.quote(identifier, safe="")


class SyncASGITransport(httpx.BaseTransport):
    """Drive an ASGI app from a synchronous httpx.Client.

    Each request runs in its own event loop, so concurrent calls from
    worker threads stay independent.
    """

    def __init__(self, app):
        self._transport = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        async def call():
            response = await self._transport.handle_async_request(request)
            await response.aread()
            return response

        upstream = asyncio.run(call())
        return httpx.Response(upstream.status_code, headers=upstream.headers,
                              content=upstream.content, request=request)


class _BaseClient:
    def __init__(self, base_url: str | None = None, app=None,
                 client: httpx.Client | None = None, timeout: float = 60.0):
        if client is not None:
            self._client = client
        elif app is not None:
            self._client = httpx.Client(transport=SyncASGITransport(app),
                                        base_url="http://fabric.internal",
                                        timeout=timeout)
        elif base_url is not None:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)
        else:
            raise ValueError("need base_url, app, or client")

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _check(self, response: httpx.Response) -> httpx.Response:
        if response.status_code < 400:
            return response
        detail, kind = response.text, None
        try:
            body = response.json()
            if isinstance(body, dict):
                detail = str(body.get("detail", detail))
                kind = body.get("kind")
        except ValueError:
            pass
        error_cls = ERROR_KINDS.get(kind) or _STATUS_FALLBACK.get(
            response.status_code, FabricError)
        raise error_cls(detail)


class RegistryClient(_BaseClient):
    def publish_model(self, record: dict, servable: bytes) -> str:
        body = {"record": record,
                "servable_b64": base64.b64encode(servable).decode("ascii")}
        response = self._check(self._client.post("/models", json=body))
        return response.json()["identifier"]

    def publish_dataset(self, record: dict, bag_path: str | Path) -> str:
        body = {"record": record,
                "bag_zip_b64": base64.b64encode(zip_directory(Path(bag_path))).decode("ascii")}
        response = self._check(self._client.post("/datasets", json=body))
        return response.json()["identifier"]

    def get_metadata(self, identifier: str) -> dict:
        response = self._check(self._client.get(f"/entries/{_quote(identifier)}"))
        return response.json()

    def download_artifact(self, identifier: str) -> bytes:
        response = self._check(
            self._client.get(f"/entries/{_quote(identifier)}/artifact"))
        return response.content

    def withdraw(self, identifier: str) -> dict:
        response = self._check(
            self._client.delete(f"/entries/{_quote(identifier)}/artifact"))
        return response.json()

    def search(self, query: str) -> list[dict]:
        response = self._check(self._client.get("/search", params={"q": query}))
        return response.json()["hits"]


class BrokerClient(_BaseClient):
    def register_endpoint(self, name: str, profile) -> str:
        doc = profile.to_document() if hasattr(profile, "to_document") else dict(profile)
        response = self._check(self._client.post(
            "/endpoints", json={"name": name, "profile": doc}))
        return response.json()["endpoint_id"]

    def list_endpoints(self) -> list[dict]:
        response = self._check(self._client.get("/endpoints"))
        return response.json()["endpoints"]

    def heartbeat(self, endpoint_id: str, running_task_ids=()) -> dict:
        response = self._check(self._client.post(
            f"/endpoints/{endpoint_id}/heartbeat",
            json={"running_task_ids": list(running_task_ids)}))
        return response.json()

    def lease_tasks(self, endpoint_id: str, max_tasks: int) -> list[dict]:
        response = self._check(self._client.post(
            f"/endpoints/{endpoint_id}/lease", json={"max_tasks": max_tasks}))
        return response.json()["leases"]

    def submit_task(self, model_identifier: str, input_reference: dict,
                    requested_endpoint: str | None = None,
                    marker: str | None = None) -> str:
        body = {"model_identifier": model_identifier,
                "input_reference": input_reference,
                "requested_endpoint": requested_endpoint, "marker": marker}
        response = self._check(self._client.post("/tasks", json=body))
        return response.json()["task_id"]

    def report_result(self, endpoint_id: str, task_id: str, status: str,
                      result: bytes | None = None,
                      error_detail: str | None = None) -> dict:
        body = {"endpoint_id": endpoint_id, "status": status,
                "result_b64": (base64.b64encode(result).decode("ascii")
                               if result is not None else None),
                "error_detail": error_detail}
        response = self._check(self._client.post(f"/tasks/{task_id}/result", json=body))
        return response.json()

    def poll_task(self, task_id: str) -> dict:
        response = self._check(self._client.get(f"/tasks/{task_id}"))
        return response.json()

    def get_result(self, task_id: str) -> bytes:
        response = self._check(self._client.get(f"/tasks/{task_id}/result"))
        return response.content
