"""Object-removal sample generation.

From a replacement pair, find regions of image A that actually hold an
object (cross-image sub-similarity below the presence cut), erase them by
inpainting, describe the erased object, verify the description scores
high against the object side and low against the erased side, then emit
a left/right multiple-choice sample with a seeded side shuffle.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import dataclasses
import numpy as np

from .backend.ops import inpaint, itm, mllm_complete, segment
from .backend.protocol import Backend, BackendError
from .config import ThresholdConfig
from .filters import image_similarity
from .funnel import QuarantineError
from .imaging import RasterImage, concat_with_divider, crop, draw_red_box
from .prompts import ANSWER_LEFT, ANSWER_RIGHT, PromptTemplates
from .types import (
    ROLE_ASSISTANT,
    ROLE_HUMAN,
    SAMPLE_KIND_REMOVAL,
    BBox,
    DifferenceSample,
    ImagePair,
    RegionCandidate,
    ValidationError,
)
from .captions import concat_image_name, sample_id_for
from .util import derive_seed


@dataclass(frozen=True)
class ExistAbsentPair:
    """An image and its object-erased counterpart for one region."""

    original: RasterImage
    erased: RasterImage
    box: BBox
    mask: np.ndarray
    description: str
    object_side_after_shuffle: Optional[str] = None  # "left" | "right", set at MCQ build

    def __post_init__(self):
        if (self.original.width, self.original.height) != (self.erased.width, self.erased.height):
            raise ValidationError("ExistAbsentPair images must share dimensions")
        if self.object_side_after_shuffle not in (None, "left", "right"):
            raise ValidationError(
                f"object_side_after_shuffle must be left/right, got {self.object_side_after_shuffle!r}"
            )


def detect_object_regions(
    a: RasterImage,
    b: RasterImage,
    cfg: ThresholdConfig,
    backend: Backend,
    faults: Optional[list] = None,
    counts: Optional[dict] = None,
) -> list[RegionCandidate]:
    """Regions of `a` whose counterpart in `b` looks different, meaning the
    region contains an object (the pair differs only by the replacement)."""
    seg = segment(a, cfg.seg_conf, cfg.iou, backend, side="a")
    if counts is not None:
        counts["segmented"] = counts.get("segmented", 0) + len(seg.regions)
    kept = []
    for cand in seg.regions:
        try:
            sim = image_similarity(crop(a, cand.box), crop(b, cand.box), backend)
        except (BackendError, QuarantineError) as e:
            if faults is None:
                raise
            faults.append((cand, str(e)))
            continue
        if sim < cfg.rm_contains_sim:
            kept.append(dataclasses.replace(cand, difference=1.0 - sim))
    return kept


def erase(
    a: RasterImage,
    mask: np.ndarray,
    box: BBox,
    backend: Backend,
    seed: int,
    templates: PromptTemplates,
) -> RasterImage:
    """Inpaint the masked region away using the fixed erase prompt."""
    return inpaint(a, mask, box, templates.inpaint, seed, backend)


def describe_object(
    original: RasterImage,
    box: BBox,
    backend: Backend,
    seed: int,
    templates: PromptTemplates,
) -> str:
    prompt = templates.removal_description.format(x0=box.x0, y0=box.y0, x1=box.x1, y1=box.y1)
    return mllm_complete(original, prompt, seed, backend)


def verify_removal(
    sub_original: RasterImage,
    sub_erased: RasterImage,
    description: str,
    cfg: ThresholdConfig,
    backend: Backend,
) -> bool:
    """Description must score strictly above rm_itm_pos on the object side
    and strictly below rm_itm_neg on the erased side."""
    if not description:
        raise ValidationError("verify_removal requires a nonempty description")
    pos = itm(sub_original, description, backend)
    neg = itm(sub_erased, description, backend)
    return pos > cfg.rm_itm_pos and neg < cfg.rm_itm_neg


def build_mcq_sample(
    pair: ExistAbsentPair,
    cfg: ThresholdConfig,
    rng: random.Random,
    templates: PromptTemplates,
    images_dir: str | Path,
    pair_id: str,
) -> DifferenceSample:
    """Shuffle which side shows the object, highlight, concatenate, and
    phrase the left/right question."""
    object_left = rng.random() < 0.5
    side = "left" if object_left else "right"
    left, right = (pair.original, pair.erased) if object_left else (pair.erased, pair.original)

    boxed_left = draw_red_box(left, pair.box, cfg.box_thickness_px)
    boxed_right = draw_red_box(right, pair.box, cfg.box_thickness_px)
    image = concat_with_divider(boxed_left, boxed_right, cfg.divider_px)

    sample_id = sample_id_for(pair_id, pair.box, "m")
    image_name = concat_image_name(pair_id, pair.box, "m")
    images_dir = Path(images_dir)
    images_dir.mkdir(parents=True, exist_ok=True)
    image.save_png(images_dir / image_name)

    question = templates.removal_question.format(description=pair.description)
    answer = ANSWER_LEFT if object_left else ANSWER_RIGHT
    return DifferenceSample(
        sample_id=sample_id,
        pair_id=pair_id,
        box=pair.box,
        kind=SAMPLE_KIND_REMOVAL,
        concat_image_ref=f"images/{image_name}",
        conversation=(
            (ROLE_HUMAN, f"<image>\n{question}"),
            (ROLE_ASSISTANT, answer),
        ),
        provenance={
            "description": pair.description,
            "object_side": side,
            "answer": answer,
        },
    )


def removal_samples_for_pair(
    pair: ImagePair,
    cfg: ThresholdConfig,
    backend: Backend,
    templates: PromptTemplates,
    images_dir: str | Path,
    counts: Optional[dict] = None,
) -> list[DifferenceSample]:
    """Full removal flow for one replacement pair, capped at cfg.top_n
    regions. `counts` (when given) accumulates per-gate tallies."""

    def bump(key: str, n: int = 1):
        if counts is not None:
            counts[key] = counts.get(key, 0) + n

    faults: list = []
    regions = detect_object_regions(
        pair.image_a, pair.image_b, cfg, backend, faults=faults, counts=counts
    )
    bump("detect_quarantined", len(faults))
    bump("regions_detected", len(regions))

    regions = [r for r in regions if r.mask is not None][: cfg.top_n]
    bump("capped", len(regions))
    samples: list[DifferenceSample] = []
    for region in regions:
        region_key = f"{region.box.x0}-{region.box.y0}-{region.box.x1}-{region.box.y1}"
        try:
            erased = erase(
                pair.image_a,
                region.mask,
                region.box,
                backend,
                derive_seed(pair.seed, f"erase:{region_key}"),
                templates,
            )
            description = describe_object(
                pair.image_a,
                region.box,
                backend,
                derive_seed(pair.seed, f"describe:{region_key}"),
                templates,
            )
            ok = verify_removal(
                crop(pair.image_a, region.box),
                crop(erased, region.box),
                description,
                cfg,
                backend,
            )
        except (BackendError, QuarantineError) as e:
            bump("erase_quarantined")
            if counts is not None:
                counts.setdefault("quarantine_reasons", []).append(str(e))
            continue
        if not ok:
            bump("verify_rejected")
            continue
        exist_absent = ExistAbsentPair(
            original=pair.image_a,
            erased=erased,
            box=region.box,
            mask=region.mask,
            description=description,
        )
        rng = random.Random(derive_seed(cfg.seed, f"shuffle:{pair.pair_id}:{region_key}"))
        samples.append(
            build_mcq_sample(exist_absent, cfg, rng, templates, images_dir, pair.pair_id)
        )
        bump("accepted")
    return samples
