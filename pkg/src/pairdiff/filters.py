"""Embedding-space gates: cosine similarity, the image-similarity band,
image-text matching, caption similarity, and the sub-image difference
detector.

All gates are pure given a fixed backend, and all are contractions: they
never emit more items than they receive, and survivors satisfy their
predicate exactly (re-checkable after the fact). Comparison conventions
(strict vs closed) come from ThresholdConfig's documentation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .backend.ops import embed_image, embed_text, itm
from .backend.protocol import Backend, BackendError
from .funnel import QuarantineError
from .imaging import RasterImage, crop
from .types import ImagePair, RegionCandidate, ValidationError
from .util import ordered_parallel_map


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size < 1:
        raise ValidationError("embeddings must be nonempty 1-d vectors")
    if a.shape != b.shape:
        raise ValidationError(f"embedding dimension mismatch: {a.size} vs {b.size}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValidationError("embeddings must be finite")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def image_similarity(a: RasterImage, b: RasterImage, backend: Backend) -> float:
    return cosine_similarity(embed_image(a, backend), embed_image(b, backend))


# itm lives with the protocol wrappers; re-exported here because gating
# call sites read better as filters.itm_score
itm_score = itm

BAND_KEPT = "kept"
BAND_DROPPED_LOW = "dropped_low"
BAND_DROPPED_HIGH = "dropped_high"
BAND_QUARANTINED = "quarantined"


@dataclass(frozen=True)
class BandDecision:
    pair: ImagePair
    status: str
    score: Optional[float] = None
    reason: str = ""


def band_filter_pairs(
    pairs: Iterable[ImagePair],
    lo: float,
    hi: float,
    backend: Backend,
    max_in_flight: int = 1,
) -> list[BandDecision]:
    """Classify each pair against the closed similarity band [lo, hi].

    Emits one decision per input, in input order. A backend failure
    quarantines that pair rather than failing the run.
    """
    if not lo < hi:
        raise ValidationError(f"band requires lo < hi, got [{lo}, {hi}]")

    def decide(pair: ImagePair) -> BandDecision:
        try:
            score = image_similarity(pair.image_a, pair.image_b, backend)
        except (BackendError, QuarantineError, ValidationError) as e:
            return BandDecision(pair, BAND_QUARANTINED, reason=str(e))
        if score < lo:
            return BandDecision(pair, BAND_DROPPED_LOW, score=score)
        if score > hi:
            return BandDecision(pair, BAND_DROPPED_HIGH, score=score)
        return BandDecision(pair, BAND_KEPT, score=score)

    return ordered_parallel_map(decide, pairs, max_in_flight)


def caption_similarity(caption_a: str, caption_b: str, backend: Backend) -> float:
    if not caption_a or not caption_b:
        raise ValidationError("caption similarity requires two nonempty captions")
    try:
        return cosine_similarity(
            embed_text(caption_a, backend), embed_text(caption_b, backend)
        )
    except ValidationError as e:
        raise QuarantineError("degenerate_caption_embedding", str(e)) from e


def caption_similarity_gate(
    caption_a: str, caption_b: str, cs_thr: float, backend: Backend
) -> bool:
    """True when the captions count as different (cosine strictly below cs_thr)."""
    return caption_similarity(caption_a, caption_b, backend) < cs_thr


def difference_detector(
    pair: ImagePair,
    boxes: Sequence[RegionCandidate],
    diff_sim_thr: float,
    backend: Backend,
    faults: Optional[list] = None,
) -> list[RegionCandidate]:
    """Keep boxes whose two sub-images differ: similarity strictly below
    diff_sim_thr. Survivors carry difference = 1 - similarity.

    Per-box backend failures are appended to `faults` as (candidate,
    reason) and the box is skipped.
    """
    kept: list[RegionCandidate] = []
    for cand in boxes:
        try:
            sub_a = crop(pair.image_a, cand.box)
            sub_b = crop(pair.image_b, cand.box)
            sim = image_similarity(sub_a, sub_b, backend)
        except (BackendError, QuarantineError, ValidationError) as e:
            if faults is None:
                raise
            faults.append((cand, str(e)))
            continue
        if sim < diff_sim_thr:
            kept.append(dataclasses.replace(cand, difference=1.0 - sim))
    return kept
