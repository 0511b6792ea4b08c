"""Annotation review service.

Serves dataset samples to a fixed allowlist of annotators, records
high/medium/low votes on three quality metrics (one live vote per
(sample, annotator, metric); resubmission overwrites), and aggregates per
metric by strict majority with ties surfaced as unresolved. Votes persist
durably on every write.
"""

from __future__ import annotations

import json
import os
import threading
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse

from .dataset import read_samples

METRIC_BBOX = "bbox_difference"
METRIC_CONTENT = "content_caption_accuracy"
METRIC_DIFFERENCE = "difference_caption_accuracy"
METRICS = (METRIC_BBOX, METRIC_CONTENT, METRIC_DIFFERENCE)
SCORES = ("high", "medium", "low")
UNRESOLVED = "unresolved"


def majority_score(scores: list[str]) -> Optional[str]:
    """Strict majority of submitted votes, None on ties or no votes."""
    if not scores:
        return None
    counts = Counter(scores)
    score, n = counts.most_common(1)[0]
    return score if n * 2 > len(scores) else None


class VoteStore:
    """Durable last-write-wins vote log (append-only JSONL on disk)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.votes: dict[tuple[str, str, str], dict] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self.votes[(rec["sample_id"], rec["annotator_id"], rec["metric"])] = rec

    def put(self, sample_id: str, annotator_id: str, metric: str, score: str) -> bool:
        rec = {
            "sample_id": sample_id,
            "annotator_id": annotator_id,
            "metric": metric,
            "score": score,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        key = (sample_id, annotator_id, metric)
        with self._lock:
            replaced = key in self.votes
            self.votes[key] = rec
            with open(self.path, "a") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
        return replaced

    def by_annotator(self, sample_id: str, annotator_id: str) -> dict[str, str]:
        return {
            metric: rec["score"]
            for (sid, aid, metric), rec in self.votes.items()
            if sid == sample_id and aid == annotator_id
        }

    def by_sample_metric(self, sample_id: str, metric: str) -> list[str]:
        return [
            rec["score"]
            for (sid, _aid, m), rec in self.votes.items()
            if sid == sample_id and m == metric
        ]


def create_review_app(
    dataset_dir: str | Path,
    annotators: list[str],
    votes_path: str | Path,
) -> FastAPI:
    dataset_dir = Path(dataset_dir)
    records = read_samples(dataset_dir)
    by_id = {rec["id"]: rec for rec in records}
    order = [rec["id"] for rec in records]
    allowlist = set(annotators)
    store = VoteStore(votes_path)

    app = FastAPI(title="pairdiff review", version="1")
    # the browser client may be served from another origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def require_annotator(annotator: str) -> str:
        if annotator not in allowlist:
            raise HTTPException(status_code=403, detail=f"unknown annotator {annotator!r}")
        return annotator

    def sample_view(sample_id: str, annotator: Optional[str]) -> dict:
        rec = by_id[sample_id]
        votes = store.by_annotator(sample_id, annotator) if annotator else {}
        return {
            "sample_id": sample_id,
            "image_url": f"/api/samples/{sample_id}/image",
            "kind": rec.get("kind", ""),
            "conversations": rec["conversations"],
            "provenance": rec.get("provenance", {}),
            "votes": votes,
        }

    def pending_ids(annotator: str) -> list[str]:
        return [
            sid for sid in order if len(store.by_annotator(sid, annotator)) < len(METRICS)
        ]

    @app.get("/api/samples/next")
    def next_sample(annotator: str):
        require_annotator(annotator)
        pending = pending_ids(annotator)
        if not pending:
            return {"done": True, "remaining": 0, "sample": None}
        return {
            "done": False,
            "remaining": len(pending),
            "sample": sample_view(pending[0], annotator),
        }

    @app.get("/api/samples/{sample_id}")
    def get_sample(sample_id: str, annotator: Optional[str] = None):
        if annotator is not None:
            require_annotator(annotator)
        if sample_id not in by_id:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")
        return sample_view(sample_id, annotator)

    @app.get("/api/samples/{sample_id}/image")
    def get_sample_image(sample_id: str):
        if sample_id not in by_id:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")
        path = dataset_dir / by_id[sample_id]["image"]
        if not path.exists():
            raise HTTPException(status_code=404, detail="image file missing")
        return FileResponse(path, media_type="image/png")

    @app.post("/api/votes")
    def post_vote(vote: dict = Body(...)):
        for key in ("sample_id", "annotator_id", "metric", "score"):
            if not isinstance(vote.get(key), str) or not vote[key]:
                raise HTTPException(status_code=400, detail=f"vote is missing field {key!r}")
        extra = set(vote) - {"sample_id", "annotator_id", "metric", "score", "timestamp"}
        if extra:
            raise HTTPException(status_code=400, detail=f"unexpected vote fields {sorted(extra)}")
        if vote["metric"] not in METRICS:
            raise HTTPException(status_code=400, detail=f"unknown metric {vote['metric']!r}")
        if vote["score"] not in SCORES:
            raise HTTPException(status_code=400, detail=f"unknown score {vote['score']!r}")
        require_annotator(vote["annotator_id"])
        if vote["sample_id"] not in by_id:
            raise HTTPException(status_code=404, detail=f"unknown sample {vote['sample_id']!r}")
        replaced = store.put(vote["sample_id"], vote["annotator_id"], vote["metric"], vote["score"])
        return {"accepted": True, "replaced_previous": replaced}

    @app.get("/api/report")
    def report():
        metrics = {}
        for metric in METRICS:
            counts = {s: 0 for s in (*SCORES, UNRESOLVED)}
            voted = 0
            for sid in order:
                scores = store.by_sample_metric(sid, metric)
                if not scores:
                    continue
                voted += 1
                resolved = majority_score(scores)
                counts[resolved if resolved is not None else UNRESOLVED] += 1
            percent = {
                k: (round(100.0 * v / voted, 2) if voted else 0.0) for k, v in counts.items()
            }
            metrics[metric] = {"voted_samples": voted, "counts": counts, "percent": percent}
        return {"total_samples": len(order), "metrics": metrics}

    return app
