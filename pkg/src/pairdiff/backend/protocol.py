"""Wire protocol shared by every model backend.

Eight capabilities sit behind one request/response shape. Requests are
JSON: {capability, request_id, seed, payload} with images carried as
base64-encoded PNG (lossless). Responses are {request_id, result}; errors
use the envelope {code, message, request_id}.

A request digest (capability + seed + payload, request_id excluded)
identifies a call for transcript record/replay and for scripted fixtures.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
from typing import Optional

import numpy as np
from PIL import Image

from ..imaging import RasterImage

CAP_REWRITE_CAPTION = "rewrite_caption"
CAP_GENERATE_PAIR = "generate_pair"
CAP_INPAINT = "inpaint"
CAP_EMBED_IMAGE = "embed_image"
CAP_EMBED_TEXT = "embed_text"
CAP_ITM = "itm"
CAP_SEGMENT = "segment"
CAP_MLLM_COMPLETE = "mllm_complete"

CAPABILITIES = (
    CAP_REWRITE_CAPTION,
    CAP_GENERATE_PAIR,
    CAP_INPAINT,
    CAP_EMBED_IMAGE,
    CAP_EMBED_TEXT,
    CAP_ITM,
    CAP_SEGMENT,
    CAP_MLLM_COMPLETE,
)

# Capabilities whose output depends on a sampling seed; requests must carry one.
GENERATIVE_CAPABILITIES = frozenset(
    {CAP_REWRITE_CAPTION, CAP_GENERATE_PAIR, CAP_INPAINT, CAP_MLLM_COMPLETE}
)

ERR_INVALID_PAYLOAD = "invalid_payload"
ERR_UNSUPPORTED = "unsupported"
ERR_MISSING_FIXTURE = "missing_fixture"
ERR_MISSING_TRANSCRIPT = "missing_transcript"
ERR_PROTOCOL_VIOLATION = "protocol_violation"
ERR_BACKEND = "backend_error"

ERROR_STATUS = {
    ERR_INVALID_PAYLOAD: 400,
    ERR_UNSUPPORTED: 501,
    ERR_MISSING_FIXTURE: 404,
    ERR_MISSING_TRANSCRIPT: 404,
    ERR_PROTOCOL_VIOLATION: 502,
    ERR_BACKEND: 500,
}


class BackendError(Exception):
    """A backend call failed; `code` is one of the protocol error codes."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def request_digest(capability: str, payload: dict, seed: Optional[int]) -> str:
    """Stable identity of a call. request_id is deliberately excluded so
    replaying a transcript matches regardless of issue order."""
    blob = json.dumps(
        {"capability": capability, "seed": seed, "payload": payload},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    return hashlib.sha256(blob).hexdigest()


def encode_image(image: RasterImage) -> str:
    return base64.b64encode(image.to_png_bytes()).decode("ascii")


def decode_image(data: str) -> RasterImage:
    try:
        return RasterImage.from_bytes(base64.b64decode(data))
    except Exception as e:
        raise BackendError(ERR_INVALID_PAYLOAD, f"undecodable image payload: {e}") from e


def encode_mask(mask: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray((mask.astype(np.uint8)) * 255, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_mask(data: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(base64.b64decode(data))) as im:
            return np.asarray(im.convert("L")) >= 128
    except Exception as e:
        raise BackendError(ERR_INVALID_PAYLOAD, f"undecodable mask payload: {e}") from e


class Backend:
    """Base class for all backends.

    Subclasses implement `_call`; `call` adds request-id bookkeeping and
    seed validation. Implementations must be safe under concurrent calls.
    """

    name = "backend"

    def __init__(self):
        self._id_lock = threading.Lock()
        self._id_counter = 0

    def next_request_id(self) -> str:
        with self._id_lock:
            self._id_counter += 1
            return f"{self.name}-{self._id_counter:08d}"

    def call(
        self,
        capability: str,
        payload: dict,
        seed: Optional[int] = None,
        request_id: Optional[str] = None,
    ) -> dict:
        if capability not in CAPABILITIES:
            raise BackendError(ERR_UNSUPPORTED, f"unknown capability {capability!r}")
        if capability in GENERATIVE_CAPABILITIES and seed is None:
            raise BackendError(
                ERR_INVALID_PAYLOAD, f"capability {capability!r} requires a seed"
            )
        if request_id is None:
            request_id = self.next_request_id()
        return self._call(capability, payload, seed, request_id)

    def call_batch(self, capability: str, items: list[tuple[dict, Optional[int]]]) -> list[dict]:
        return [self.call(capability, payload, seed) for payload, seed in items]

    def _call(self, capability: str, payload: dict, seed: Optional[int], request_id: str) -> dict:
        raise NotImplementedError
