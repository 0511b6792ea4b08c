"""Typed wrappers over the backend protocol.

These convert between domain objects and wire payloads, enforce the
operation contracts (no-op rewrites, dimension stability, empty
responses), and raise QuarantineError for item-level faults so callers
can set the item aside without aborting a run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..funnel import QuarantineError
from ..imaging import RasterImage, suppress_by_confidence
from ..prompts import PromptTemplates
from ..types import BBox, CaptionPair, ImagePair, RegionCandidate, ValidationError
from .protocol import (
    CAP_EMBED_IMAGE,
    CAP_EMBED_TEXT,
    CAP_GENERATE_PAIR,
    CAP_INPAINT,
    CAP_ITM,
    CAP_MLLM_COMPLETE,
    CAP_REWRITE_CAPTION,
    CAP_SEGMENT,
    ERR_PROTOCOL_VIOLATION,
    Backend,
    BackendError,
    decode_image,
    decode_mask,
    encode_image,
    encode_mask,
)


@dataclass(frozen=True)
class SegmentResult:
    """Confidence- and overlap-filtered segmentation regions."""

    regions: tuple[RegionCandidate, ...]


def rewrite_caption(
    caption: str,
    source_id: str,
    seed: int,
    backend: Backend,
    templates: PromptTemplates,
) -> CaptionPair:
    """Ask the backend to replace one object in the caption.

    The prompt is the fixed rewrite template with the caption substituted.
    A rewrite that returns the input unchanged or omits the replacement
    metadata quarantines the item.
    """
    if not caption:
        raise QuarantineError("empty_caption", f"source {source_id}")
    prompt = templates.rewrite.format(input=caption)
    result = backend.call(
        CAP_REWRITE_CAPTION, {"prompt": prompt, "caption": caption}, seed=seed
    )
    edited = result.get("edited", "")
    replaced = result.get("replaced_object", "")
    replacement = result.get("replacement_object", "")
    if edited == caption:
        raise QuarantineError("rewrite_noop", f"rewrite returned the input unchanged: {caption!r}")
    if not replaced or not replacement:
        raise QuarantineError("rewrite_metadata_missing", f"source {source_id}")
    try:
        return CaptionPair(
            original=caption,
            edited=edited,
            replaced_object=replaced,
            replacement_object=replacement,
            source_id=source_id,
        )
    except ValidationError as e:
        raise QuarantineError("rewrite_invalid", str(e)) from e


def generate_pair(captions: CaptionPair, seed: int, backend: Backend, pair_id: str) -> ImagePair:
    result = backend.call(
        CAP_GENERATE_PAIR,
        {
            "caption_a": captions.original,
            "caption_b": captions.edited,
            "replaced_object": captions.replaced_object,
            "replacement_object": captions.replacement_object,
        },
        seed=seed,
    )
    image_a = decode_image(result["image_a"])
    image_b = decode_image(result["image_b"])
    if (image_a.width, image_a.height) != (image_b.width, image_b.height):
        raise BackendError(
            ERR_PROTOCOL_VIOLATION,
            f"generate_pair returned mismatched dimensions "
            f"{image_a.width}x{image_a.height} vs {image_b.width}x{image_b.height}",
        )
    return ImagePair(image_a=image_a, image_b=image_b, captions=captions, seed=seed, pair_id=pair_id)


def segment(
    image: RasterImage, seg_conf_thr: float, iou_thr: float, backend: Backend, side: str = "a"
) -> SegmentResult:
    """Segment an image, keep regions with confidence above the floor,
    then greedily suppress overlaps by confidence."""
    result = backend.call(CAP_SEGMENT, {"image": encode_image(image)})
    candidates = []
    for region in result.get("regions", []):
        box = BBox.from_list(region["box"])
        if not box.within(image.width, image.height):
            raise BackendError(
                ERR_PROTOCOL_VIOLATION, f"segment region {box} exceeds image bounds"
            )
        conf = float(region["confidence"])
        mask = decode_mask(region["mask"]) if region.get("mask") else None
        candidates.append(
            RegionCandidate(box=box, seg_confidence=conf, mask=mask, side=side)
        )
    kept = [c for c in candidates if c.seg_confidence > seg_conf_thr]
    return SegmentResult(regions=tuple(suppress_by_confidence(kept, iou_thr)))


def mllm_complete(image: RasterImage, prompt: str, seed: int, backend: Backend) -> str:
    if not prompt:
        raise ValidationError("mllm_complete requires a nonempty prompt")
    result = backend.call(
        CAP_MLLM_COMPLETE, {"image": encode_image(image), "prompt": prompt}, seed=seed
    )
    text = result.get("text", "")
    if not text:
        raise QuarantineError("empty_response", "mllm returned empty text")
    return text


def embed_image(image: RasterImage, backend: Backend) -> np.ndarray:
    result = backend.call(CAP_EMBED_IMAGE, {"image": encode_image(image)})
    return np.asarray(result["embedding"], dtype=np.float64)


def embed_text(text: str, backend: Backend) -> np.ndarray:
    if not text:
        raise ValidationError("embed_text requires nonempty text")
    result = backend.call(CAP_EMBED_TEXT, {"text": text})
    return np.asarray(result["embedding"], dtype=np.float64)


def itm(image: RasterImage, text: str, backend: Backend) -> float:
    if not text:
        raise ValidationError("itm requires nonempty text")
    result = backend.call(CAP_ITM, {"image": encode_image(image), "text": text})
    score = float(result["score"])
    if not 0.0 <= score <= 1.0:
        raise BackendError(ERR_PROTOCOL_VIOLATION, f"itm score out of range: {score}")
    return score


def inpaint(
    image: RasterImage,
    mask: np.ndarray,
    box: BBox,
    prompt: str,
    seed: int,
    backend: Backend,
) -> RasterImage:
    """Erase the masked region (mask aligned to box) with the given prompt."""
    result = backend.call(
        CAP_INPAINT,
        {
            "image": encode_image(image),
            "mask": encode_mask(mask),
            "box": box.to_list(),
            "prompt": prompt,
        },
        seed=seed,
    )
    out = decode_image(result["image"])
    if (out.width, out.height) != (image.width, image.height):
        raise BackendError(
            ERR_PROTOCOL_VIOLATION,
            f"inpaint changed dimensions {image.width}x{image.height} -> {out.width}x{out.height}",
        )
    return out
