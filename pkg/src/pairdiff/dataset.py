"""Dataset emission, funnel reporting, and diversity analytics.

Samples are written as sharded line-delimited JSON in the conversation
format consumed by visual instruction tuning ({id, image, conversations:
[{from: human|gpt, value}]}), with concatenated images under images/ and
a manifest recording shard digests and counts. Emission is deterministic
and idempotent: re-emitting the same samples reproduces the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .funnel import Funnel
from .types import (
    ROLE_ASSISTANT,
    CaptionPair,
    DifferenceSample,
    ValidationError,
)
from .util import sha256_file

SHARD_SIZE = 1000
MANIFEST_NAME = "manifest.json"
EMIT_MARKER = "_EMIT_IN_PROGRESS"

_ROLE_TO_WIRE = {"human": "human", ROLE_ASSISTANT: "gpt"}


def sample_to_wire(sample: DifferenceSample) -> dict:
    return {
        "id": sample.sample_id,
        "image": sample.concat_image_ref,
        "conversations": [
            {"from": _ROLE_TO_WIRE[role], "value": text} for role, text in sample.conversation
        ],
        "kind": sample.kind,
        "pair_id": sample.pair_id,
        "box": sample.box.to_list(),
        "provenance": sample.provenance,
    }


def emit_dataset(
    samples: Iterable[DifferenceSample],
    out_dir: str | Path,
    shard_size: int = SHARD_SIZE,
) -> dict:
    """Write shards and the manifest; returns the manifest dict.

    A marker file flags an interrupted emission; re-running overwrites it
    idempotently. Duplicate sample ids are an error.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / EMIT_MARKER
    marker.write_text("emission in progress\n")

    samples = list(samples)
    seen: set[str] = set()
    for s in samples:
        if s.sample_id in seen:
            raise ValidationError(f"duplicate sample id {s.sample_id}")
        seen.add(s.sample_id)

    shards = []
    for start in range(0, len(samples), shard_size):
        chunk = samples[start : start + shard_size]
        name = f"data-{start // shard_size:05d}.jsonl"
        tmp = out_dir / (name + ".tmp")
        with open(tmp, "w") as f:
            for s in chunk:
                f.write(json.dumps(sample_to_wire(s), sort_keys=True) + "\n")
        tmp.replace(out_dir / name)
        shards.append(
            {"path": name, "count": len(chunk), "sha256": sha256_file(out_dir / name)}
        )

    manifest = {"count": len(samples), "shards": shards, "images_dir": "images"}
    tmp = out_dir / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(out_dir / MANIFEST_NAME)
    marker.unlink()
    return manifest


def load_manifest(out_dir: str | Path) -> dict:
    return json.loads((Path(out_dir) / MANIFEST_NAME).read_text())


def read_samples(out_dir: str | Path) -> list[dict]:
    """All wire-format sample records, in shard order."""
    out_dir = Path(out_dir)
    manifest = load_manifest(out_dir)
    records = []
    for shard in manifest["shards"]:
        for line in (out_dir / shard["path"]).read_text().splitlines():
            if line.strip():
                records.append(json.loads(line))
    return records


# --- diversity ------------------------------------------------------------


def normalize_object_name(name: str) -> str:
    """Fixed normalization rule: lowercase, collapse whitespace, naive
    singular of the last word (ies->y; es after x/z/ch/sh/ss dropped;
    otherwise a trailing s dropped unless ss)."""
    words = name.lower().split()
    if not words:
        return ""
    last = words[-1]
    if last.endswith("ies") and len(last) > 3:
        last = last[:-3] + "y"
    elif last.endswith(("xes", "zes", "ches", "shes", "sses")):
        last = last[:-2]
    elif last.endswith("s") and not last.endswith("ss") and len(last) > 1:
        last = last[:-1]
    return " ".join(words[:-1] + [last])


@dataclass(frozen=True)
class DiversityStats:
    categories: int
    replacement_pairs: int
    total_occurrences: int
    vocab_size: int = 0
    vocab_occurrences: int = 0

    @property
    def avg_per_name(self) -> float:
        return self.total_occurrences / self.categories if self.categories else 0.0

    @property
    def vocab_avg(self) -> float:
        return self.vocab_occurrences / self.vocab_size if self.vocab_size else 0.0

    @property
    def vocab_fraction(self) -> float:
        return self.vocab_occurrences / self.total_occurrences if self.total_occurrences else 0.0

    def to_dict(self) -> dict:
        return {
            "categories": self.categories,
            "replacement_pairs": self.replacement_pairs,
            "total_occurrences": self.total_occurrences,
            "avg_per_name": round(self.avg_per_name, 2),
            "vocab_size": self.vocab_size,
            "vocab_occurrences": self.vocab_occurrences,
            "vocab_avg": round(self.vocab_avg, 2),
            "vocab_fraction_pct": round(100.0 * self.vocab_fraction, 2),
        }


def diversity_report(
    caption_pairs: Iterable[CaptionPair],
    vocab: Optional[Iterable[str]] = None,
) -> DiversityStats:
    """Object-name statistics over the replacement metadata of emitted
    samples. Every replaced and replacement name counts as one occurrence."""
    occurrences: dict[str, int] = {}
    pair_names: set[tuple[str, str]] = set()
    for cp in caption_pairs:
        a = normalize_object_name(cp.replaced_object)
        b = normalize_object_name(cp.replacement_object)
        occurrences[a] = occurrences.get(a, 0) + 1
        occurrences[b] = occurrences.get(b, 0) + 1
        pair_names.add((a, b))

    total = sum(occurrences.values())
    vocab_size = 0
    vocab_occ = 0
    if vocab is not None:
        vocab_set = {normalize_object_name(v) for v in vocab}
        vocab_size = len(vocab_set)
        vocab_occ = sum(n for name, n in occurrences.items() if name in vocab_set)
    return DiversityStats(
        categories=len(occurrences),
        replacement_pairs=len(pair_names),
        total_occurrences=total,
        vocab_size=vocab_size,
        vocab_occurrences=vocab_occ,
    )


# --- funnel ---------------------------------------------------------------


def funnel_report(funnel: Funnel) -> dict:
    """Serializable report with conservation checks resolved."""
    problems = funnel.validate()
    return {
        "conserved": not problems,
        "problems": problems,
        **funnel.to_dict(),
    }


def write_reports(out_dir: str | Path, funnel: Funnel, diversity: Optional[DiversityStats]) -> None:
    out_dir = Path(out_dir)
    report = funnel_report(funnel)
    (out_dir / "funnel.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out_dir / "funnel.txt").write_text(funnel.render_table() + "\n")
    if diversity is not None:
        (out_dir / "diversity.json").write_text(
            json.dumps(diversity.to_dict(), indent=2, sort_keys=True) + "\n"
        )
