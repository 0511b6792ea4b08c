"""Per-stage accounting: kept/dropped/quarantined counters and quarantine records.

Every stage conserves its items exactly: in = kept + sum(dropped by
reason) + quarantined. Stages are grouped into chains of a common unit
(pairs, regions, ...); within a chain, each stage's input count equals
the previous stage's kept count. Unit transitions (one pair fanning out
to many candidate regions) start a new chain.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional


class QuarantineError(Exception):
    """An item hit a fault (not a gate decision) and is set aside with a
    reason code instead of aborting the run."""

    def __init__(self, reason: str, message: str = ""):
        super().__init__(f"{reason}: {message}" if message else reason)
        self.reason = reason
        self.detail = message


@dataclass
class StageCount:
    name: str
    unit: str
    chain: str
    n_in: int = 0
    kept: int = 0
    dropped: Counter = field(default_factory=Counter)
    quarantined: int = 0

    @property
    def n_dropped(self) -> int:
        return sum(self.dropped.values())

    def conserved(self) -> bool:
        return self.n_in == self.kept + self.n_dropped + self.quarantined

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "unit": self.unit,
            "chain": self.chain,
            "in": self.n_in,
            "kept": self.kept,
            "dropped": dict(sorted(self.dropped.items())),
            "quarantined": self.quarantined,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageCount":
        return cls(
            name=d["name"],
            unit=d["unit"],
            chain=d["chain"],
            n_in=d["in"],
            kept=d["kept"],
            dropped=Counter(d.get("dropped", {})),
            quarantined=d.get("quarantined", 0),
        )


@dataclass
class QuarantineRecord:
    stage: str
    item_id: str
    reason: str
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "item_id": self.item_id,
            "reason": self.reason,
            "message": self.message,
        }


class Funnel:
    """Ordered collection of stage counters plus the quarantine log."""

    def __init__(self):
        self.stages: list[StageCount] = []
        self.quarantines: list[QuarantineRecord] = []

    def stage(self, name: str, unit: str, chain: str) -> StageCount:
        sc = StageCount(name=name, unit=unit, chain=chain)
        self.stages.append(sc)
        return sc

    def quarantine(self, stage: StageCount, item_id: str, reason: str, message: str = ""):
        stage.quarantined += 1
        self.quarantines.append(QuarantineRecord(stage.name, item_id, reason, message))

    def find(self, name: str) -> Optional[StageCount]:
        for sc in self.stages:
            if sc.name == name:
                return sc
        return None

    def validate(self) -> list[str]:
        """Conservation and chain-continuity violations, empty when sound."""
        problems = []
        prev_by_chain: dict[str, StageCount] = {}
        for sc in self.stages:
            if not sc.conserved():
                problems.append(
                    f"stage {sc.name}: in={sc.n_in} != kept={sc.kept} "
                    f"+ dropped={sc.n_dropped} + quarantined={sc.quarantined}"
                )
            prev = prev_by_chain.get(sc.chain)
            if prev is not None and sc.n_in != prev.kept:
                problems.append(
                    f"stage {sc.name}: in={sc.n_in} does not equal "
                    f"previous stage {prev.name} kept={prev.kept}"
                )
            prev_by_chain[sc.chain] = sc
        return problems

    def to_dict(self) -> dict:
        return {
            "stages": [sc.to_dict() for sc in self.stages],
            "quarantines": [q.to_dict() for q in self.quarantines],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Funnel":
        f = cls()
        f.stages = [StageCount.from_dict(s) for s in d.get("stages", [])]
        f.quarantines = [QuarantineRecord(**q) for q in d.get("quarantines", [])]
        return f

    def merge(self, other: "Funnel") -> None:
        self.stages.extend(other.stages)
        self.quarantines.extend(other.quarantines)

    def render_table(self) -> str:
        header = f"{'stage':<24} {'unit':<8} {'in':>8} {'kept':>8} {'dropped':>8} {'quar':>6}  reasons"
        lines = [header, "-" * len(header)]
        for sc in self.stages:
            reasons = ", ".join(f"{k}={v}" for k, v in sorted(sc.dropped.items()))
            lines.append(
                f"{sc.name:<24} {sc.unit:<8} {sc.n_in:>8} {sc.kept:>8} "
                f"{sc.n_dropped:>8} {sc.quarantined:>6}  {reasons}"
            )
        return "\n".join(lines)


def write_quarantines(path, records: list[QuarantineRecord]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
