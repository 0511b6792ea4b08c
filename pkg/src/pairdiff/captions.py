"""Difference-caption generation over accepted regions.

Stage 1 labels each selected region with a content caption per side and
gates on caption/image matching (citm) and caption dissimilarity (cs).
Stage 2 highlights the region with red boxes on both images, concatenates
them, and asks the model to describe the difference. Finally the sample
is assembled in conversation format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .areas import DifferenceAreas
from .backend.ops import itm, mllm_complete
from .backend.protocol import Backend
from .config import ThresholdConfig
from .filters import caption_similarity
from .imaging import candidate_sort_key, concat_with_divider, crop, draw_red_box
from .prompts import PromptTemplates
from .types import (
    ROLE_ASSISTANT,
    ROLE_HUMAN,
    SAMPLE_KIND_REPLACEMENT,
    BBox,
    DifferenceSample,
    ImagePair,
    RegionCandidate,
)
from .util import derive_seed, stable_hash64

CITM_FAIL = "citm_fail"
CS_FAIL = "cs_fail"


def select_regions(areas: DifferenceAreas, n: int) -> list[RegionCandidate]:
    """Top-n regions by difference descending (ties: smaller area, then
    coordinates), i.e. the regions whose sub-images are least similar."""
    ranked = sorted(areas.regions, key=candidate_sort_key)
    return ranked[:n]


@dataclass(frozen=True)
class RegionLabel:
    """A region that passed both Stage-1 gates, with its content captions
    and recorded gate scores."""

    box: BBox
    caption_a: str
    caption_b: str
    citm_a: float
    citm_b: float
    cs: float
    difference: float


@dataclass(frozen=True)
class RegionRejection:
    box: BBox
    kind: str  # CITM_FAIL or CS_FAIL
    detail: str


def label_region(
    pair: ImagePair,
    region: RegionCandidate,
    cfg: ThresholdConfig,
    backend: Backend,
    templates: PromptTemplates,
) -> Union[RegionLabel, RegionRejection]:
    """Caption both sub-images of the region and gate the result.

    Accepts iff both captions match their sub-image strictly above
    cfg.citm and the captions differ (cosine strictly below cfg.cs).
    """
    box = region.box
    sub_a = crop(pair.image_a, box)
    sub_b = crop(pair.image_b, box)
    caption_a = mllm_complete(
        sub_a, templates.region_description, derive_seed(pair.seed, f"label:a:{box}"), backend
    )
    caption_b = mllm_complete(
        sub_b, templates.region_description, derive_seed(pair.seed, f"label:b:{box}"), backend
    )
    citm_a = itm(sub_a, caption_a, backend)
    citm_b = itm(sub_b, caption_b, backend)
    if not citm_a > cfg.citm:
        return RegionRejection(box, CITM_FAIL, f"side a: {citm_a:.4f} <= {cfg.citm}")
    if not citm_b > cfg.citm:
        return RegionRejection(box, CITM_FAIL, f"side b: {citm_b:.4f} <= {cfg.citm}")
    cs = caption_similarity(caption_a, caption_b, backend)
    if not cs < cfg.cs:
        return RegionRejection(box, CS_FAIL, f"caption cosine {cs:.4f} >= {cfg.cs}")
    return RegionLabel(
        box=box,
        caption_a=caption_a,
        caption_b=caption_b,
        citm_a=citm_a,
        citm_b=citm_b,
        cs=cs,
        difference=region.difference if region.difference is not None else 0.0,
    )


def highlighted_concat(
    pair: ImagePair, box: BBox, cfg: ThresholdConfig
):
    """Red-box both images at the region and join them around the divider."""
    boxed_a = draw_red_box(pair.image_a, box, cfg.box_thickness_px)
    boxed_b = draw_red_box(pair.image_b, box, cfg.box_thickness_px)
    return concat_with_divider(boxed_a, boxed_b, cfg.divider_px)


def difference_caption(
    pair: ImagePair,
    label: RegionLabel,
    cfg: ThresholdConfig,
    backend: Backend,
    templates: PromptTemplates,
) -> str:
    """Stage 2: describe the difference inside the highlighted region."""
    image = highlighted_concat(pair, label.box, cfg)
    prompt = templates.difference.format(caption_a=label.caption_a, caption_b=label.caption_b)
    return mllm_complete(image, prompt, derive_seed(pair.seed, f"diff:{label.box}"), backend)


def sample_id_for(pair_id: str, box: BBox, kind_tag: str) -> str:
    return f"{pair_id}-{kind_tag}{box.x0}-{box.y0}-{box.x1}-{box.y1}"


def concat_image_name(pair_id: str, box: BBox, kind_tag: str) -> str:
    return f"{sample_id_for(pair_id, box, kind_tag)}.png"


def build_sample(
    pair: ImagePair,
    label: RegionLabel,
    diff_caption: str,
    cfg: ThresholdConfig,
    templates: PromptTemplates,
    images_dir: str | Path,
) -> DifferenceSample:
    """Assemble the conversation sample and write its concatenated image
    (once per (pair, box); rewrites are byte-identical)."""
    sample_id = sample_id_for(pair.pair_id, label.box, "r")
    question_idx = (cfg.seed ^ stable_hash64(sample_id)) % len(templates.questions)
    question = templates.questions[question_idx]

    image_name = concat_image_name(pair.pair_id, label.box, "r")
    images_dir = Path(images_dir)
    images_dir.mkdir(parents=True, exist_ok=True)
    highlighted_concat(pair, label.box, cfg).save_png(images_dir / image_name)

    return DifferenceSample(
        sample_id=sample_id,
        pair_id=pair.pair_id,
        box=label.box,
        kind=SAMPLE_KIND_REPLACEMENT,
        concat_image_ref=f"images/{image_name}",
        conversation=(
            (ROLE_HUMAN, f"<image>\n{question}"),
            (ROLE_ASSISTANT, diff_caption),
        ),
        provenance={
            "captions": pair.captions.to_dict(),
            "caption_a": label.caption_a,
            "caption_b": label.caption_b,
            "difference_caption": diff_caption,
            "citm_a": label.citm_a,
            "citm_b": label.citm_b,
            "cs": label.cs,
            "difference": label.difference,
        },
    )
