"""Protocol conformance suite for backend services.

Runnable against anything that answers POST /v1/{capability}: the
in-process stubs mounted behind the bundled HTTP server, or an external
service. The checks cover every capability's golden request, envelope and
result schemas, request-id echo, error envelopes for unknown capability /
bad payload / missing seed, and the batch endpoint.

`post` is any callable (path, body) -> (status_code, json_body), so tests
can drive an ASGI test client and deployments can drive a real socket.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from jsonschema import validate

from .backend.protocol import (
    CAP_EMBED_IMAGE,
    CAP_EMBED_TEXT,
    CAP_GENERATE_PAIR,
    CAP_INPAINT,
    CAP_ITM,
    CAP_MLLM_COMPLETE,
    CAP_REWRITE_CAPTION,
    CAP_SEGMENT,
    GENERATIVE_CAPABILITIES,
    encode_image,
    encode_mask,
)
from .imaging import RasterImage
from .prompts import REWRITE_TEMPLATE
from .schemas import load_schema

PostFn = Callable[[str, dict], tuple[int, dict]]

RESULT_SCHEMA_BY_CAPABILITY = {
    CAP_REWRITE_CAPTION: "result_rewrite_caption",
    CAP_GENERATE_PAIR: "result_generate_pair",
    CAP_INPAINT: "result_inpaint",
    CAP_EMBED_IMAGE: "result_embedding",
    CAP_EMBED_TEXT: "result_embedding",
    CAP_ITM: "result_itm",
    CAP_SEGMENT: "result_segment",
    CAP_MLLM_COMPLETE: "result_mllm_complete",
}


def _schema_for(name: str) -> dict:
    doc = load_schema("backend")
    return {"$ref": f"#/definitions/{name}", "definitions": doc["definitions"]}


def _golden_image() -> RasterImage:
    px = np.full((16, 16, 3), (200, 200, 200), dtype=np.uint8)
    px[3:13, 3:13] = (220, 30, 30)
    return RasterImage(px)


def golden_requests() -> dict[str, tuple[dict, Optional[int]]]:
    """A valid (payload, seed) per capability."""
    image = _golden_image()
    image_b64 = encode_image(image)
    caption = "a red square and a blue circle"
    mask = np.ones((10, 10), dtype=bool)
    return {
        CAP_REWRITE_CAPTION: (
            {"prompt": REWRITE_TEMPLATE.format(input=caption), "caption": caption},
            11,
        ),
        CAP_GENERATE_PAIR: (
            {"caption_a": caption, "caption_b": "a green triangle and a blue circle"},
            11,
        ),
        CAP_INPAINT: (
            {
                "image": image_b64,
                "mask": encode_mask(mask),
                "box": [3, 3, 13, 13],
                "prompt": "background, nothing, 8k.",
            },
            11,
        ),
        CAP_EMBED_IMAGE: ({"image": image_b64}, None),
        CAP_EMBED_TEXT: ({"text": caption}, None),
        CAP_ITM: ({"image": image_b64, "text": "red square"}, None),
        CAP_SEGMENT: ({"image": image_b64}, None),
        CAP_MLLM_COMPLETE: ({"image": image_b64, "prompt": "Describe the main object."}, 11),
    }


def run_http_conformance(post: PostFn, max_batch: Optional[int] = None) -> None:
    """Assert full protocol conformance; raises AssertionError on the
    first violation, naming the failing check."""
    response_schema = _schema_for("response")
    error_schema = _schema_for("error_envelope")
    batch_schema = _schema_for("batch_response")

    for capability, (payload, seed) in golden_requests().items():
        status, body = post(
            f"/v1/{capability}",
            {"request_id": f"conf-{capability}", "seed": seed, "payload": payload},
        )
        assert status == 200, f"{capability}: expected 200, got {status}: {body}"
        validate(body, response_schema)
        assert body["request_id"] == f"conf-{capability}", f"{capability}: request_id not echoed"
        validate(body["result"], _schema_for(RESULT_SCHEMA_BY_CAPABILITY[capability]))

    # unknown capability
    status, body = post("/v1/levitate", {"request_id": "conf-x", "payload": {}})
    assert status == 501, f"unknown capability: expected 501, got {status}"
    validate(body, error_schema)
    assert body["code"] == "unsupported"

    # malformed payload
    status, body = post(
        f"/v1/{CAP_ITM}", {"request_id": "conf-bad", "payload": {"text": "no image"}}
    )
    assert 400 <= status < 500, f"bad payload: expected 4xx, got {status}"
    validate(body, error_schema)

    # generative capability without a seed
    rewrite_payload, _ = golden_requests()[CAP_REWRITE_CAPTION]
    status, body = post(
        f"/v1/{CAP_REWRITE_CAPTION}",
        {"request_id": "conf-noseed", "payload": rewrite_payload},
    )
    assert status == 400, f"missing seed: expected 400, got {status}"
    validate(body, error_schema)
    assert sorted(GENERATIVE_CAPABILITIES) == sorted(
        [CAP_REWRITE_CAPTION, CAP_GENERATE_PAIR, CAP_INPAINT, CAP_MLLM_COMPLETE]
    )

    # homogeneous batch
    itm_payload, _ = golden_requests()[CAP_ITM]
    reqs = [
        {"request_id": f"conf-b{i}", "seed": None, "payload": itm_payload} for i in range(2)
    ]
    status, body = post(f"/v1/batch/{CAP_ITM}", {"requests": reqs})
    assert status == 200, f"batch: expected 200, got {status}"
    validate(body, batch_schema)
    assert [r["request_id"] for r in body["responses"]] == ["conf-b0", "conf-b1"]
    assert all("result" in r for r in body["responses"])

    # batch size cap
    if max_batch is not None:
        too_many = [
            {"request_id": f"conf-o{i}", "seed": None, "payload": itm_payload}
            for i in range(max_batch + 1)
        ]
        status, body = post(f"/v1/batch/{CAP_ITM}", {"requests": too_many})
        assert status == 400, f"oversized batch: expected 400, got {status}"
        validate(body, error_schema)

    # determinism of embeddings (same request twice)
    embed_payload, _ = golden_requests()[CAP_EMBED_IMAGE]
    _, first = post("/v1/embed_image", {"request_id": "conf-d1", "payload": embed_payload})
    _, second = post("/v1/embed_image", {"request_id": "conf-d2", "payload": embed_payload})
    assert first["result"] == second["result"], "embed_image is not deterministic"
