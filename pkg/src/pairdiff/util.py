"""Small shared helpers: stable hashing, canonical JSON, ordered parallel map."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def stable_hash64(text: str) -> int:
    """Deterministic 64-bit hash of a string (process- and run-independent)."""
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def derive_seed(run_seed: int, key: str) -> int:
    """Per-item seed: run seed XOR a stable hash of the item key."""
    return (run_seed ^ stable_hash64(key)) & 0x7FFFFFFFFFFFFFFF


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def ordered_parallel_map(
    fn: Callable[[T], R], items: Iterable[T], max_workers: int
) -> list[R]:
    """Apply fn to items with bounded concurrency, returning results in
    input order. Exceptions propagate from the failing item."""
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))
