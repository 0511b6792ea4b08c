"""Shared domain types flowing through the pipeline.

Everything here is immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Optional

import numpy as np

if TYPE_CHECKING:
    from .imaging import RasterImage


class ValidationError(ValueError):
    """A domain object violated one of its invariants."""


@dataclass(frozen=True)
class BBox:
    """Integer pixel rectangle, origin top-left, half-open on the
    right/bottom edges: pixel (x, y) is inside iff x0 <= x < x1 and
    y0 <= y < y1.
    """

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValidationError(f"BBox.{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.x0 < 0 or self.y0 < 0:
            raise ValidationError(f"BBox coordinates must be >= 0, got {self}")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValidationError(
                f"BBox must have positive area (x0 < x1 and y0 < y1), got {self}"
            )

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def within(self, width: int, height: int) -> bool:
        """True when the box lies fully inside a width x height image."""
        return self.x1 <= width and self.y1 <= height

    def to_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, coords) -> "BBox":
        x0, y0, x1, y1 = coords
        return cls(int(x0), int(y0), int(x1), int(y1))


@dataclass(frozen=True)
class CaptionPair:
    """An original caption and its object-replaced rewrite.

    `replaced_object` must occur as a token sequence in `original`;
    `replacement_object` must occur in `edited`.
    """

    original: str
    edited: str
    replaced_object: str
    replacement_object: str
    source_id: str

    def __post_init__(self):
        if self.original == self.edited:
            raise ValidationError("CaptionPair: edited caption equals the original")
        if not self.replaced_object or not self.replacement_object:
            raise ValidationError("CaptionPair: replacement metadata missing")
        if not _contains_token_sequence(self.original, self.replaced_object):
            raise ValidationError(
                f"CaptionPair: {self.replaced_object!r} does not appear in the original caption"
            )
        if not _contains_token_sequence(self.edited, self.replacement_object):
            raise ValidationError(
                f"CaptionPair: {self.replacement_object!r} does not appear in the edited caption"
            )

    def to_dict(self) -> dict[str, str]:
        return {
            "original": self.original,
            "edited": self.edited,
            "replaced_object": self.replaced_object,
            "replacement_object": self.replacement_object,
            "source_id": self.source_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaptionPair":
        return cls(
            original=d["original"],
            edited=d["edited"],
            replaced_object=d["replaced_object"],
            replacement_object=d["replacement_object"],
            source_id=d["source_id"],
        )


def _tokens(text: str) -> list[str]:
    return [t for t in "".join(c.lower() if c.isalnum() else " " for c in text).split() if t]


def _contains_token_sequence(text: str, phrase: str) -> bool:
    hay, needle = _tokens(text), _tokens(phrase)
    if not needle:
        return False
    return any(hay[i : i + len(needle)] == needle for i in range(len(hay) - len(needle) + 1))


@dataclass(frozen=True)
class ImagePair:
    """Two same-sized images plus the caption pair they were generated from."""

    image_a: "RasterImage"
    image_b: "RasterImage"
    captions: CaptionPair
    seed: int
    pair_id: str

    def __post_init__(self):
        if (self.image_a.width, self.image_a.height) != (self.image_b.width, self.image_b.height):
            raise ValidationError(
                f"ImagePair {self.pair_id}: images differ in size "
                f"({self.image_a.width}x{self.image_a.height} vs "
                f"{self.image_b.width}x{self.image_b.height})"
            )


@dataclass(frozen=True)
class RegionCandidate:
    """A localized region under consideration as a difference area.

    `difference` is 1 - cosine similarity of the two sub-image embeddings,
    hence in [0, 2]. `side` records which image of the pair the region was
    segmented from ("a" or "b").
    """

    box: BBox
    seg_confidence: float
    difference: Optional[float] = None
    mask: Optional[np.ndarray] = None
    side: str = "a"

    def __post_init__(self):
        if not 0.0 <= self.seg_confidence <= 1.0:
            raise ValidationError(
                f"RegionCandidate.seg_confidence must be in [0, 1], got {self.seg_confidence}"
            )
        if self.difference is not None and not 0.0 <= self.difference <= 2.0:
            raise ValidationError(
                f"RegionCandidate.difference must be in [0, 2], got {self.difference}"
            )
        if self.mask is not None and self.mask.shape != (self.box.height, self.box.width):
            raise ValidationError(
                f"RegionCandidate.mask shape {self.mask.shape} does not match box "
                f"{self.box.height}x{self.box.width}"
            )
        if self.side not in ("a", "b"):
            raise ValidationError(f"RegionCandidate.side must be 'a' or 'b', got {self.side!r}")


SAMPLE_KIND_REPLACEMENT = "object_replacement"
SAMPLE_KIND_REMOVAL = "object_removal"

ROLE_HUMAN = "human"
ROLE_ASSISTANT = "assistant"


@dataclass(frozen=True)
class DifferenceSample:
    """One emitted training instance.

    The conversation starts with a human turn and alternates roles. For
    object-removal samples, provenance records which side (left/right)
    holds the object, matching the recorded answer.
    """

    sample_id: str
    pair_id: str
    box: BBox
    kind: str
    concat_image_ref: str
    conversation: tuple[tuple[str, str], ...]
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (SAMPLE_KIND_REPLACEMENT, SAMPLE_KIND_REMOVAL):
            raise ValidationError(f"DifferenceSample.kind invalid: {self.kind!r}")
        if not self.conversation:
            raise ValidationError("DifferenceSample: empty conversation")
        for i, (role, text) in enumerate(self.conversation):
            expected = ROLE_HUMAN if i % 2 == 0 else ROLE_ASSISTANT
            if role != expected:
                raise ValidationError(
                    f"DifferenceSample: turn {i} must be {expected!r}, got {role!r}"
                )
            if not text:
                raise ValidationError(f"DifferenceSample: turn {i} is empty")
        if self.kind == SAMPLE_KIND_REMOVAL:
            side = self.provenance.get("object_side")
            if side not in ("left", "right"):
                raise ValidationError(
                    "object_removal sample must record provenance['object_side'] "
                    f"as 'left' or 'right', got {side!r}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "pair_id": self.pair_id,
            "box": self.box.to_list(),
            "kind": self.kind,
            "concat_image_ref": self.concat_image_ref,
            "conversation": [[role, text] for role, text in self.conversation],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DifferenceSample":
        return cls(
            sample_id=d["sample_id"],
            pair_id=d["pair_id"],
            box=BBox.from_list(d["box"]),
            kind=d["kind"],
            concat_image_ref=d["concat_image_ref"],
            conversation=tuple((r, t) for r, t in d["conversation"]),
            provenance=d.get("provenance", {}),
        )
