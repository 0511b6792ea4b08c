"""HTTP service exposing any backend over the wire protocol.

POST /v1/{capability} handles one request; POST /v1/batch/{capability}
takes up to `max_batch` homogeneous requests and returns per-item
outcomes. Errors use the {code, message, request_id} envelope with the
status mapped from the error code.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .protocol import CAPABILITIES, ERR_INVALID_PAYLOAD, ERROR_STATUS, Backend, BackendError


class WireRequest(BaseModel):
    request_id: Optional[str] = None
    seed: Optional[int] = None
    payload: dict = Field(default_factory=dict)


class BatchWireRequest(BaseModel):
    requests: list[WireRequest]


def _error_response(code: str, message: str, request_id: Optional[str]) -> JSONResponse:
    return JSONResponse(
        status_code=ERROR_STATUS.get(code, 500),
        content={"code": code, "message": message, "request_id": request_id},
    )


def create_backend_app(backend: Backend, max_batch: int = 64) -> FastAPI:
    app = FastAPI(title="pairdiff model backend", version="1")

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "backend": backend.name, "capabilities": list(CAPABILITIES)}

    @app.post("/v1/batch/{capability}")
    def call_batch(capability: str, batch: BatchWireRequest):
        if len(batch.requests) > max_batch:
            return _error_response(
                ERR_INVALID_PAYLOAD,
                f"batch of {len(batch.requests)} exceeds limit {max_batch}",
                None,
            )
        responses = []
        for req in batch.requests:
            request_id = req.request_id or backend.next_request_id()
            try:
                result = backend.call(
                    capability, req.payload, seed=req.seed, request_id=request_id
                )
                responses.append({"request_id": request_id, "result": result})
            except BackendError as e:
                responses.append(
                    {"request_id": request_id, "error": {"code": e.code, "message": e.message}}
                )
        return {"responses": responses}

    @app.post("/v1/{capability}")
    def call_one(capability: str, req: WireRequest):
        request_id = req.request_id or backend.next_request_id()
        try:
            result = backend.call(capability, req.payload, seed=req.seed, request_id=request_id)
        except BackendError as e:
            return _error_response(e.code, e.message, request_id)
        return {"request_id": request_id, "result": result}

    return app
