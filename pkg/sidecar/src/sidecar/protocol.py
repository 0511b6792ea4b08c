"""Wire-protocol constants and codec helpers.

The shapes implemented here follow the published pairdiff backend schemas
(error envelope, request/response envelopes, base64-PNG image payloads);
this module re-states them independently so the sidecar has no runtime
dependency on the engine package.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

CAPABILITIES = (
    "rewrite_caption",
    "generate_pair",
    "inpaint",
    "embed_image",
    "embed_text",
    "itm",
    "segment",
    "mllm_complete",
)

# capabilities whose output depends on a sampling seed
GENERATIVE = frozenset({"rewrite_caption", "generate_pair", "inpaint", "mllm_complete"})

ERROR_STATUS = {
    "invalid_payload": 400,
    "unsupported": 501,
    "backend_error": 500,
}


class CapabilityError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def decode_image(data: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data)
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except Exception as e:
        raise CapabilityError("invalid_payload", f"undecodable image: {e}") from e


def encode_image(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_mask(data: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data)
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("L")) >= 128
    except Exception as e:
        raise CapabilityError("invalid_payload", f"undecodable mask: {e}") from e


def encode_mask(mask: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def require(payload: dict, *keys: str) -> list:
    missing = [k for k in keys if k not in payload or payload[k] in (None, "")]
    if missing:
        raise CapabilityError("invalid_payload", f"payload missing keys: {missing}")
    return [payload[k] for k in keys]
