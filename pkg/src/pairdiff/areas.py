"""Difference-area generation: locate the boxes where an image pair differs.

Per pair: segment both images, pool the candidates, gate them on
image-text matching against the replacement metadata, keep only boxes
whose sub-images actually differ, then suppress overlaps keeping the
higher-difference box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .backend.ops import itm, segment
from .backend.protocol import Backend, BackendError
from .config import ThresholdConfig
from .filters import difference_detector
from .funnel import QuarantineError
from .imaging import crop, suppress_by_difference
from .types import ImagePair, RegionCandidate


@dataclass(frozen=True)
class DifferenceAreas:
    """Final difference regions for one pair plus per-gate counts.

    stage_counts maps gate name -> {"in", "kept", "quarantined"}; drops
    are the remainder. Regions are pairwise IoU-bounded and each passed
    every gate.
    """

    pair_id: str
    regions: tuple[RegionCandidate, ...]
    stage_counts: dict[str, dict[str, int]]

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "regions": [
                {
                    "box": r.box.to_list(),
                    "difference": r.difference,
                    "side": r.side,
                    "seg_confidence": r.seg_confidence,
                }
                for r in self.regions
            ],
            "stage_counts": self.stage_counts,
        }


def candidate_boxes(
    pair: ImagePair, cfg: ThresholdConfig, backend: Backend
) -> list[RegionCandidate]:
    """Segmentation candidates pooled from both images, tagged with their
    originating side."""
    seg_a = segment(pair.image_a, cfg.seg_conf, cfg.iou, backend, side="a")
    seg_b = segment(pair.image_b, cfg.seg_conf, cfg.iou, backend, side="b")
    return list(seg_a.regions) + list(seg_b.regions)


def gate_valid_objects(
    pair: ImagePair,
    candidates: list[RegionCandidate],
    cfg: ThresholdConfig,
    backend: Backend,
    faults: Optional[list] = None,
) -> list[RegionCandidate]:
    """Keep candidates whose cropped sub-image matches either the replaced
    or the replacement object name with score strictly above cfg.bitm."""
    texts = (pair.captions.replaced_object, pair.captions.replacement_object)
    kept = []
    for cand in candidates:
        source = pair.image_a if cand.side == "a" else pair.image_b
        try:
            sub = crop(source, cand.box)
            best = max(itm(sub, text, backend) for text in texts)
        except (BackendError, QuarantineError) as e:
            if faults is None:
                raise
            faults.append((cand, str(e)))
            continue
        if best > cfg.bitm:
            kept.append(cand)
    return kept


def generate(pair: ImagePair, cfg: ThresholdConfig, backend: Backend) -> DifferenceAreas:
    """Run the full gate chain for one pair. An empty region list is a
    valid outcome; quarantined candidates are counted per gate."""
    candidates = candidate_boxes(pair, cfg, backend)

    itm_faults: list = []
    valid = gate_valid_objects(pair, candidates, cfg, backend, faults=itm_faults)

    diff_faults: list = []
    differing = difference_detector(pair, valid, cfg.diff_sim, backend, faults=diff_faults)

    final = suppress_by_difference(differing, cfg.iou)

    stage_counts = {
        "candidates": {"produced": len(candidates)},
        "itm_gate": {
            "in": len(candidates),
            "kept": len(valid),
            "quarantined": len(itm_faults),
        },
        "difference": {
            "in": len(valid),
            "kept": len(differing),
            "quarantined": len(diff_faults),
        },
        "suppression": {"in": len(differing), "kept": len(final), "quarantined": 0},
    }
    return DifferenceAreas(
        pair_id=pair.pair_id, regions=tuple(final), stage_counts=stage_counts
    )
