"""Threshold ablation sweeps over a shared candidate pool.

One generation pass builds a pool of candidate regions with every gate
score recorded (pair similarity, best box ITM, sub-image similarity,
caption ITM per side, caption cosine). Each config is then applied as a
pure predicate over the recorded scores, so survivor sets across configs
are directly comparable: when one config is at least as strict as another
on every threshold, its survivors are a subset of the other's.

Suppression and top-n selection run once on the shared pool (they are
score-, not threshold-, dependent); swept thresholds act only as
predicates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .areas import candidate_boxes
from .backend.ops import itm, mllm_complete
from .backend.protocol import Backend, BackendError
from .config import ThresholdConfig
from .filters import caption_similarity, image_similarity
from .funnel import QuarantineError
from .imaging import crop, suppress_by_difference
from .prompts import PromptTemplates
from .types import ImagePair
from .util import derive_seed

import dataclasses


@dataclass(frozen=True)
class PoolRow:
    """One candidate region with every swept gate's score recorded."""

    pair_id: str
    box: tuple[int, int, int, int]
    pair_similarity: float
    best_itm: float
    sub_similarity: float
    citm_a: float
    citm_b: float
    caption_cosine: float

    @property
    def key(self) -> tuple:
        return (self.pair_id, self.box)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def build_candidate_pool(
    pairs: list[ImagePair],
    base_cfg: ThresholdConfig,
    backend: Backend,
    templates: Optional[PromptTemplates] = None,
) -> list[PoolRow]:
    """Score every candidate of every pair without applying any swept
    threshold. seg_conf/iou/top_n come from base_cfg and are shared."""
    templates = templates or PromptTemplates()
    rows: list[PoolRow] = []
    for pair in pairs:
        try:
            pair_sim = image_similarity(pair.image_a, pair.image_b, backend)
            candidates = candidate_boxes(pair, base_cfg, backend)
        except (BackendError, QuarantineError):
            continue
        texts = (pair.captions.replaced_object, pair.captions.replacement_object)
        scored = []
        for cand in candidates:
            try:
                source = pair.image_a if cand.side == "a" else pair.image_b
                best = max(itm(crop(source, cand.box), t, backend) for t in texts)
                sub_sim = image_similarity(
                    crop(pair.image_a, cand.box), crop(pair.image_b, cand.box), backend
                )
            except (BackendError, QuarantineError):
                continue
            scored.append((dataclasses.replace(cand, difference=1.0 - sub_sim), best, sub_sim))

        by_key = {
            (c.box.x0, c.box.y0, c.box.x1, c.box.y1): (best, sub)
            for c, best, sub in scored
        }
        deduped = suppress_by_difference([c for c, _, _ in scored], base_cfg.iou)
        selected = deduped[: base_cfg.top_n]
        for cand in selected:
            box = cand.box
            best, sub_sim = by_key[(box.x0, box.y0, box.x1, box.y1)]
            try:
                sub_a = crop(pair.image_a, box)
                sub_b = crop(pair.image_b, box)
                caption_a = mllm_complete(
                    sub_a,
                    templates.region_description,
                    derive_seed(pair.seed, f"label:a:{box}"),
                    backend,
                )
                caption_b = mllm_complete(
                    sub_b,
                    templates.region_description,
                    derive_seed(pair.seed, f"label:b:{box}"),
                    backend,
                )
                citm_a = itm(sub_a, caption_a, backend)
                citm_b = itm(sub_b, caption_b, backend)
                cosine = caption_similarity(caption_a, caption_b, backend)
            except (BackendError, QuarantineError):
                continue
            rows.append(
                PoolRow(
                    pair_id=pair.pair_id,
                    box=(box.x0, box.y0, box.x1, box.y1),
                    pair_similarity=pair_sim,
                    best_itm=best,
                    sub_similarity=sub_sim,
                    citm_a=citm_a,
                    citm_b=citm_b,
                    caption_cosine=cosine,
                )
            )
    return rows


def row_survives(row: PoolRow, cfg: ThresholdConfig) -> bool:
    return (
        cfg.is_low <= row.pair_similarity <= cfg.is_high
        and row.best_itm > cfg.bitm
        and row.sub_similarity < cfg.diff_sim
        and row.citm_a > cfg.citm
        and row.citm_b > cfg.citm
        and row.caption_cosine < cfg.cs
    )


def pool_survivors(rows: list[PoolRow], cfg: ThresholdConfig) -> set[tuple]:
    return {row.key for row in rows if row_survives(row, cfg)}


def config_dominates(stricter: ThresholdConfig, looser: ThresholdConfig) -> bool:
    """True when `stricter` filters at least as hard on every swept gate."""
    return (
        stricter.is_low >= looser.is_low
        and stricter.is_high <= looser.is_high
        and stricter.bitm >= looser.bitm
        and stricter.diff_sim <= looser.diff_sim
        and stricter.citm >= looser.citm
        and stricter.cs <= looser.cs
    )


def sweep(
    configs: list[ThresholdConfig],
    pool: list[PoolRow],
    out_path: Optional[str | Path] = None,
) -> dict:
    """Apply each config to the shared pool and report survivor counts
    plus containment for every dominance-ordered config pair."""
    if len(configs) < 2:
        raise ValueError("sweep needs at least two configs")
    survivor_sets = [pool_survivors(pool, cfg) for cfg in configs]
    comparisons = []
    for i, cfg_i in enumerate(configs):
        for j, cfg_j in enumerate(configs):
            if i == j or not config_dominates(cfg_i, cfg_j):
                continue
            comparisons.append(
                {
                    "stricter": i,
                    "looser": j,
                    "contained": survivor_sets[i] <= survivor_sets[j],
                    "stricter_count": len(survivor_sets[i]),
                    "looser_count": len(survivor_sets[j]),
                }
            )
    report = {
        "pool_size": len(pool),
        "configs": [cfg.to_dict() for cfg in configs],
        "survivor_counts": [len(s) for s in survivor_sets],
        "comparisons": comparisons,
    }
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
