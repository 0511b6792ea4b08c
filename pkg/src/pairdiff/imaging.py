"""Pure geometric and raster primitives.

All operations are stateless, never mutate their inputs, and use exact
integer pixel arithmetic so IoU and suppression results carry no floating
error beyond the final division.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .types import BBox, RegionCandidate, ValidationError


@dataclass(frozen=True)
class RasterImage:
    """Row-major RGB image, 8 bits per channel."""

    pixels: np.ndarray  # shape (height, width, 3), dtype uint8

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValidationError(f"RasterImage needs uint8 HxWx3 pixels, got {p.shape} {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValidationError("RasterImage must be at least 1x1")
        p.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels).save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RasterImage":
        """Decode PNG (or JPEG, ingest only) bytes into an image."""
        with Image.open(io.BytesIO(data)) as im:
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())

    @classmethod
    def from_file(cls, path) -> "RasterImage":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())

    def save_png(self, path) -> None:
        Image.fromarray(self.pixels).save(path, format="PNG")

    @classmethod
    def filled(cls, width: int, height: int, color=(0, 0, 0)) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:, :] = color
        return cls(px)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union by exact integer pixel counts; disjoint boxes give 0."""
    ix = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
    iy = max(0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = ix * iy
    if inter == 0:
        return 0.0
    union = a.area + b.area - inter
    return inter / union


def candidate_sort_key(c: RegionCandidate) -> tuple:
    """Deterministic order: difference descending, then smaller area, then coordinates."""
    diff = c.difference if c.difference is not None else 0.0
    return (-diff, c.box.area, c.box.x0, c.box.y0, c.box.x1, c.box.y1)


def suppress_by_difference(
    candidates: list[RegionCandidate], iou_thr: float
) -> list[RegionCandidate]:
    """Greedy overlap suppression keeping the higher-difference box.

    Candidates are visited by difference descending (ties: smaller area,
    then coordinates); one is accepted iff its IoU with every previously
    accepted box is <= iou_thr. Output preserves acceptance order.
    """
    accepted: list[RegionCandidate] = []
    for cand in sorted(candidates, key=candidate_sort_key):
        if all(iou(cand.box, kept.box) <= iou_thr for kept in accepted):
            accepted.append(cand)
    return accepted


def suppress_by_confidence(
    candidates: list[RegionCandidate], iou_thr: float
) -> list[RegionCandidate]:
    """Same greedy scheme with seg_confidence as the score."""
    key = lambda c: (-c.seg_confidence, c.box.area, c.box.x0, c.box.y0, c.box.x1, c.box.y1)
    accepted: list[RegionCandidate] = []
    for cand in sorted(candidates, key=key):
        if all(iou(cand.box, kept.box) <= iou_thr for kept in accepted):
            accepted.append(cand)
    return accepted


def crop(image: RasterImage, box: BBox) -> RasterImage:
    if not box.within(image.width, image.height):
        raise ValidationError(
            f"crop box {box} exceeds image bounds {image.width}x{image.height}"
        )
    return RasterImage(image.pixels[box.y0 : box.y1, box.x0 : box.x1].copy())


def concat_with_divider(a: RasterImage, b: RasterImage, divider_px: int) -> RasterImage:
    """Place a left and b right with a pure-black vertical divider between them."""
    if a.height != b.height:
        raise ValidationError(f"concat height mismatch: {a.height} vs {b.height}")
    if divider_px < 1:
        raise ValidationError("divider_px must be >= 1")
    out = np.zeros((a.height, a.width + divider_px + b.width, 3), dtype=np.uint8)
    out[:, : a.width] = a.pixels
    out[:, a.width + divider_px :] = b.pixels
    return RasterImage(out)


RED = (255, 0, 0)


def draw_red_box(image: RasterImage, box: BBox, thickness_px: int) -> RasterImage:
    """Paint the box perimeter band pure red, drawn inward from the box edge.

    Exactly the band pixels change; every other pixel is byte-identical to
    the input.
    """
    if thickness_px < 1:
        raise ValidationError("thickness_px must be >= 1")
    if not box.within(image.width, image.height):
        raise ValidationError(
            f"draw_red_box box {box} exceeds image bounds {image.width}x{image.height}"
        )
    t = min(thickness_px, (box.width + 1) // 2, (box.height + 1) // 2)
    px = image.pixels.copy()
    px[box.y0 : box.y0 + t, box.x0 : box.x1] = RED
    px[box.y1 - t : box.y1, box.x0 : box.x1] = RED
    px[box.y0 : box.y1, box.x0 : box.x0 + t] = RED
    px[box.y0 : box.y1, box.x1 - t : box.x1] = RED
    return RasterImage(px)
