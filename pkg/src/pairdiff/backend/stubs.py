"""In-process deterministic backends for fully offline runs.

* SceneStub answers every capability from the synthetic shape world: all
  behaviors are pure functions of (payload, seed), so runs reproduce
  byte-identically.
* ScriptedStub serves pre-registered responses keyed by request digest
  and refuses to fabricate anything it was not given.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Optional

from . import scene
from .protocol import (
    ERR_INVALID_PAYLOAD,
    ERR_MISSING_FIXTURE,
    Backend,
    BackendError,
    decode_image,
    decode_mask,
    encode_image,
    encode_mask,
    request_digest,
)

_BOX_IN_PROMPT = re.compile(r"\((\d+),\s*(\d+),\s*(\d+),\s*(\d+)\)")
_QUOTED = re.compile(r'"([^"]*)"')


def _require(payload: dict, *keys: str) -> list:
    missing = [k for k in keys if k not in payload]
    if missing:
        raise BackendError(ERR_INVALID_PAYLOAD, f"payload missing keys: {missing}")
    return [payload[k] for k in keys]


class SceneStub(Backend):
    name = "scene"

    def _call(self, capability: str, payload: dict, seed: Optional[int], request_id: str) -> dict:
        handler = getattr(self, f"_{capability}")
        return handler(payload, seed)

    def _rewrite_caption(self, payload: dict, seed: int) -> dict:
        (caption,) = _require(payload, "caption")
        rewritten = scene.rewrite_scene_caption(caption, seed)
        if rewritten is None:
            # nothing recognizable to replace; engine quarantines the no-op
            return {"edited": caption, "replaced_object": "", "replacement_object": ""}
        edited, replaced, replacement = rewritten
        return {
            "edited": edited,
            "replaced_object": replaced.phrase,
            "replacement_object": replacement.phrase,
        }

    def _generate_pair(self, payload: dict, seed: int) -> dict:
        caption_a, caption_b = _require(payload, "caption_a", "caption_b")
        image_a = scene.render_scene(scene.parse_caption(caption_a), seed)
        image_b = scene.render_scene(scene.parse_caption(caption_b), seed)
        return {"image_a": encode_image(image_a), "image_b": encode_image(image_b)}

    def _inpaint(self, payload: dict, seed: int) -> dict:
        image_b64, mask_b64, box = _require(payload, "image", "mask", "box")
        image = decode_image(image_b64)
        mask = decode_mask(mask_b64)
        x0, y0, x1, y1 = box
        bg = scene.BACKGROUND
        px = image.pixels.copy()
        region = px[y0:y1, x0:x1]
        region[mask] = bg
        out = type(image)(px)
        return {"image": encode_image(out)}

    def _embed_image(self, payload: dict, seed) -> dict:
        (image_b64,) = _require(payload, "image")
        hist = scene.color_histogram(decode_image(image_b64))
        return {"embedding": hist.tolist()}

    def _embed_text(self, payload: dict, seed) -> dict:
        (text,) = _require(payload, "text")
        return {"embedding": scene.bow_text_embedding(text).tolist()}

    def _itm(self, payload: dict, seed) -> dict:
        image_b64, text = _require(payload, "image", "text")
        return {"score": scene.token_overlap_score(decode_image(image_b64), text)}

    def _segment(self, payload: dict, seed) -> dict:
        (image_b64,) = _require(payload, "image")
        comps = scene.color_components(decode_image(image_b64))
        regions = []
        for box, mask, _color in comps:
            regions.append(
                {
                    "box": box.to_list(),
                    "confidence": round(float(mask.mean()), 6),
                    "mask": encode_mask(mask),
                }
            )
        return {"regions": regions}

    def _mllm_complete(self, payload: dict, seed: int) -> dict:
        image_b64, prompt = _require(payload, "image", "prompt")
        image = decode_image(image_b64)
        m = _BOX_IN_PROMPT.search(prompt)
        if m:
            x0, y0, x1, y1 = (int(g) for g in m.groups())
            sub = type(image)(image.pixels[y0:y1, x0:x1].copy())
            return {"text": scene.describe_image(sub)}
        quoted = _QUOTED.findall(prompt)
        if len(quoted) >= 2:
            return {"text": f"LEFT: {quoted[0]}; RIGHT: {quoted[1]}"}
        return {"text": scene.describe_image(image)}


class ScriptedStub(Backend):
    """Replays fixture responses by request digest; unknown digests raise a
    missing-fixture error."""

    name = "scripted"

    def __init__(self, fixtures: Optional[dict[str, dict]] = None):
        super().__init__()
        self.fixtures: dict[str, dict] = dict(fixtures or {})

    def add(self, capability: str, payload: dict, seed: Optional[int], result: dict) -> str:
        digest = request_digest(capability, payload, seed)
        self.fixtures[digest] = {"result": result}
        return digest

    def add_error(
        self, capability: str, payload: dict, seed: Optional[int], code: str, message: str
    ) -> str:
        digest = request_digest(capability, payload, seed)
        self.fixtures[digest] = {"error": {"code": code, "message": message}}
        return digest

    def _call(self, capability: str, payload: dict, seed: Optional[int], request_id: str) -> dict:
        digest = request_digest(capability, payload, seed)
        entry = self.fixtures.get(digest)
        if entry is None:
            raise BackendError(
                ERR_MISSING_FIXTURE,
                f"no scripted fixture for {capability} request {digest[:12]}",
            )
        if "error" in entry:
            raise BackendError(entry["error"]["code"], entry["error"]["message"])
        return entry["result"]

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            for digest, entry in sorted(self.fixtures.items()):
                f.write(json.dumps({"digest": digest, **entry}, sort_keys=True) + "\n")

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedStub":
        stub = cls()
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            digest = rec.pop("digest")
            stub.fixtures[digest] = rec
        return stub
