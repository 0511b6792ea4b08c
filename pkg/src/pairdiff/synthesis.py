"""Stage A: caption ingestion, object-replacement rewriting, image-pair
generation, and the similarity-band prefilter.

Items are independent; failures quarantine the item, never the run. All
outputs preserve input order restricted to survivors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .backend.ops import generate_pair, rewrite_caption
from .backend.protocol import Backend, BackendError
from .config import ThresholdConfig
from .filters import (
    BAND_DROPPED_HIGH,
    BAND_DROPPED_LOW,
    BAND_KEPT,
    band_filter_pairs,
)
from .funnel import Funnel, QuarantineError
from .prompts import PromptTemplates
from .types import CaptionPair, ImagePair, ValidationError
from .util import derive_seed, ordered_parallel_map


@dataclass(frozen=True)
class CaptionSource:
    """Ordered (source_id, caption) records with unique ids."""

    records: tuple[tuple[str, str], ...]

    def __post_init__(self):
        ids = [sid for sid, _ in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate caption source ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "CaptionSource":
        """Load a line-delimited JSON file of {"id": ..., "caption": ...}."""
        records = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append((str(rec["id"]), str(rec["caption"])))
            except (json.JSONDecodeError, KeyError) as e:
                raise ValidationError(f"{path}:{lineno}: bad caption record: {e}") from e
        return cls(tuple(records))


def pair_id_for(source_id: str) -> str:
    return f"p-{source_id}"


def synthesize_caption_pairs(
    source: CaptionSource,
    backend: Backend,
    seed: int,
    templates: PromptTemplates,
    funnel: Optional[Funnel] = None,
    max_in_flight: int = 1,
) -> list[CaptionPair]:
    """One CaptionPair per input caption that yields a valid rewrite."""
    stage = funnel.stage("synth-captions", unit="captions", chain="pairs") if funnel else None

    def rewrite_one(record: tuple[str, str]):
        source_id, caption = record
        try:
            return rewrite_caption(
                caption, source_id, derive_seed(seed, f"rewrite:{source_id}"), backend, templates
            )
        except QuarantineError as e:
            return ("quarantine", source_id, e.reason, e.detail)
        except BackendError as e:
            return ("quarantine", source_id, "backend_error", e.message)

    outcomes = ordered_parallel_map(rewrite_one, source.records, max_in_flight)
    pairs: list[CaptionPair] = []
    for outcome in outcomes:
        if stage:
            stage.n_in += 1
        if isinstance(outcome, CaptionPair):
            pairs.append(outcome)
            if stage:
                stage.kept += 1
        else:
            _, source_id, reason, detail = outcome
            if funnel:
                funnel.quarantine(stage, source_id, reason, detail)
    return pairs


def synthesize_image_pairs(
    caption_pairs: Iterable[CaptionPair],
    backend: Backend,
    seed: int,
    funnel: Optional[Funnel] = None,
    max_in_flight: int = 1,
) -> list[ImagePair]:
    """One ImagePair per caption pair; per-pair seed is the run seed XORed
    with a stable hash of the source id."""
    stage = funnel.stage("synth-pairs", unit="pairs", chain="pairs") if funnel else None

    def generate_one(captions: CaptionPair):
        pair_seed = derive_seed(seed, captions.source_id)
        try:
            return generate_pair(captions, pair_seed, backend, pair_id_for(captions.source_id))
        except BackendError as e:
            return ("quarantine", captions.source_id, e.code, e.message)
        except (QuarantineError, ValidationError) as e:
            return ("quarantine", captions.source_id, "generation_invalid", str(e))

    outcomes = ordered_parallel_map(generate_one, caption_pairs, max_in_flight)
    pairs: list[ImagePair] = []
    for outcome in outcomes:
        if stage:
            stage.n_in += 1
        if isinstance(outcome, ImagePair):
            pairs.append(outcome)
            if stage:
                stage.kept += 1
        else:
            _, source_id, reason, detail = outcome
            if funnel:
                funnel.quarantine(stage, source_id, reason, detail)
    return pairs


def prefilter_pairs(
    pairs: Iterable[ImagePair],
    cfg: ThresholdConfig,
    backend: Backend,
    funnel: Optional[Funnel] = None,
) -> list[tuple[ImagePair, float]]:
    """Keep pairs whose image similarity sits inside [is_low, is_high],
    annotated with the score."""
    stage = funnel.stage("prefilter", unit="pairs", chain="pairs") if funnel else None
    decisions = band_filter_pairs(
        pairs, cfg.is_low, cfg.is_high, backend, max_in_flight=cfg.max_in_flight
    )
    kept: list[tuple[ImagePair, float]] = []
    for d in decisions:
        if stage:
            stage.n_in += 1
        if d.status == BAND_KEPT:
            kept.append((d.pair, d.score))
            if stage:
                stage.kept += 1
        elif d.status in (BAND_DROPPED_LOW, BAND_DROPPED_HIGH):
            if stage:
                stage.dropped[d.status] += 1
        else:
            if funnel:
                funnel.quarantine(stage, d.pair.pair_id, "backend_error", d.reason)
    return kept
