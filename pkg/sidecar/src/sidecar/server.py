"""HTTP server implementing the backend wire protocol over the bindings."""

from __future__ import annotations

import itertools
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .bindings import CapabilityBinding, instantiate
from .protocol import CAPABILITIES, ERROR_STATUS, GENERATIVE, CapabilityError


class WireRequest(BaseModel):
    request_id: Optional[str] = None
    seed: Optional[int] = None
    payload: dict = Field(default_factory=dict)


class BatchWireRequest(BaseModel):
    requests: list[WireRequest]


def _error(code: str, message: str, request_id: Optional[str]) -> JSONResponse:
    return JSONResponse(
        status_code=ERROR_STATUS.get(code, 500),
        content={"code": code, "message": message, "request_id": request_id},
    )


def create_app(bindings: list[CapabilityBinding], max_batch: int = 64) -> FastAPI:
    """Instantiate every bound model (failing fast on load errors) and
    serve the protocol."""
    models = {b.capability: instantiate(b) for b in bindings}
    bound = {cap for cap, fn in models.items() if fn is not None}
    counter = itertools.count(1)

    app = FastAPI(title="pairdiff inference sidecar", version="1")

    def dispatch(capability: str, req: WireRequest, request_id: str) -> dict:
        if capability not in CAPABILITIES:
            raise CapabilityError("unsupported", f"unknown capability {capability!r}")
        if capability not in bound:
            raise CapabilityError("unsupported", f"capability {capability!r} is disabled")
        if capability in GENERATIVE and req.seed is None:
            raise CapabilityError("invalid_payload", f"capability {capability!r} requires a seed")
        try:
            return models[capability](req.payload, req.seed)
        except CapabilityError:
            raise
        except Exception as e:
            raise CapabilityError("backend_error", f"model failure: {e}") from e

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "backend": "sidecar", "capabilities": sorted(bound)}

    @app.post("/v1/batch/{capability}")
    def call_batch(capability: str, batch: BatchWireRequest):
        if len(batch.requests) > max_batch:
            return _error(
                "invalid_payload",
                f"batch of {len(batch.requests)} exceeds limit {max_batch}",
                None,
            )
        responses = []
        for req in batch.requests:
            request_id = req.request_id or f"sidecar-{next(counter):08d}"
            try:
                result = dispatch(capability, req, request_id)
                responses.append({"request_id": request_id, "result": result})
            except CapabilityError as e:
                responses.append(
                    {"request_id": request_id, "error": {"code": e.code, "message": e.message}}
                )
        return {"responses": responses}

    @app.post("/v1/{capability}")
    def call_one(capability: str, req: WireRequest):
        request_id = req.request_id or f"sidecar-{next(counter):08d}"
        try:
            result = dispatch(capability, req, request_id)
        except CapabilityError as e:
            return _error(e.code, e.message, request_id)
        return {"request_id": request_id, "result": result}

    return app
