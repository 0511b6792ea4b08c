"""Append-only transcript of backend calls, and record/replay wrappers.

The transcript maps request digests to outcomes (result or protocol-level
error). Recording is read-through: a digest already on file is answered
from the transcript without re-calling the inner backend, which makes
kill-and-resume byte-identical even against nondeterministic services.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from .protocol import ERR_MISSING_TRANSCRIPT, Backend, BackendError, request_digest


class Transcript:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.entries: dict[str, dict] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self.entries[rec["digest"]] = rec["outcome"]

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, digest: str) -> Optional[dict]:
        return self.entries.get(digest)

    def append(self, digest: str, outcome: dict) -> None:
        self.entries[digest] = outcome
        with open(self.path, "a") as f:
            f.write(json.dumps({"digest": digest, "outcome": outcome}, sort_keys=True) + "\n")
            f.flush()


def _raise_or_return(outcome: dict) -> dict:
    if "error" in outcome:
        raise BackendError(outcome["error"]["code"], outcome["error"]["message"])
    return outcome["result"]


class RecordingBackend(Backend):
    """Wraps a live backend, logging every call into the transcript."""

    def __init__(self, inner: Backend, transcript: Transcript):
        super().__init__()
        self.name = f"rec({inner.name})"
        self.inner = inner
        self.transcript = transcript
        self._lock = threading.Lock()

    def _call(self, capability, payload, seed, request_id) -> dict:
        digest = request_digest(capability, payload, seed)
        with self._lock:
            hit = self.transcript.get(digest)
        if hit is not None:
            return _raise_or_return(hit)
        try:
            result = self.inner.call(capability, payload, seed=seed, request_id=request_id)
            outcome = {"result": result}
        except BackendError as e:
            outcome = {"error": {"code": e.code, "message": e.message}}
        with self._lock:
            if self.transcript.get(digest) is None:
                self.transcript.append(digest, outcome)
        return _raise_or_return(outcome)


class ReplayBackend(Backend):
    """Serves recorded outcomes only; unseen requests are an error."""

    name = "replay"

    def __init__(self, transcript: Transcript):
        super().__init__()
        self.transcript = transcript

    def _call(self, capability, payload, seed, request_id) -> dict:
        digest = request_digest(capability, payload, seed)
        outcome = self.transcript.get(digest)
        if outcome is None:
            raise BackendError(
                ERR_MISSING_TRANSCRIPT,
                f"transcript has no entry for {capability} request {digest[:12]}",
            )
        return _raise_or_return(outcome)
