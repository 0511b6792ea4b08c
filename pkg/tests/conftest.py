"""Shared fixtures and independent oracle implementations.

Oracles here deliberately avoid the package's own code paths: IoU by
pixel-membership sets, histograms by per-pixel dict counting, cosine by
plain math, suppression by a direct restatement of the acceptance rule.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from pairdiff.backend.stubs import SceneStub
from pairdiff.config import ThresholdConfig
from pairdiff.imaging import RasterImage
from pairdiff.prompts import PromptTemplates
from pairdiff.types import BBox, CaptionPair, ImagePair, RegionCandidate


@pytest.fixture
def scene_backend():
    return SceneStub()


@pytest.fixture
def cfg():
    return ThresholdConfig()


@pytest.fixture
def templates():
    return PromptTemplates()


def image_from(rows) -> RasterImage:
    return RasterImage(np.asarray(rows, dtype=np.uint8))


def solid_image(width: int, height: int, color) -> RasterImage:
    return RasterImage.filled(width, height, color)


def dummy_caption_pair(source_id: str = "s0") -> CaptionPair:
    return CaptionPair(
        original="a red square",
        edited="a blue circle",
        replaced_object="red square",
        replacement_object="blue circle",
        source_id=source_id,
    )


def make_pair(image_a: RasterImage, image_b: RasterImage, pair_id: str = "p-test") -> ImagePair:
    return ImagePair(
        image_a=image_a,
        image_b=image_b,
        captions=dummy_caption_pair(pair_id),
        seed=0,
        pair_id=pair_id,
    )


# --- oracles ---------------------------------------------------------------


def oracle_iou(a: BBox, b: BBox) -> float:
    """IoU by explicit pixel membership over the covering grid."""
    pa = {(x, y) for x in range(a.x0, a.x1) for y in range(a.y0, a.y1)}
    pb = {(x, y) for x in range(b.x0, b.x1) for y in range(b.y0, b.y1)}
    union = pa | pb
    return len(pa & pb) / len(union)


def oracle_suppress(candidates: list[RegionCandidate], thr: float) -> list[RegionCandidate]:
    """Straight-line restatement of greedy difference suppression using
    the pixel-membership IoU."""
    def order(c: RegionCandidate):
        d = c.difference if c.difference is not None else 0.0
        return (-d, c.box.area, c.box.x0, c.box.y0, c.box.x1, c.box.y1)

    accepted: list[RegionCandidate] = []
    for cand in sorted(candidates, key=order):
        ok = True
        for kept in accepted:
            if oracle_iou(cand.box, kept.box) > thr:
                ok = False
                break
        if ok:
            accepted.append(cand)
    return accepted


def oracle_histogram(image: RasterImage) -> list[float]:
    """64-bin color histogram counted pixel by pixel in plain Python."""
    counts = [0.0] * 64
    h, w = image.pixels.shape[:2]
    for y in range(h):
        for x in range(w):
            r, g, b = (int(v) for v in image.pixels[y, x])
            counts[(r // 64) * 16 + (g // 64) * 4 + (b // 64)] += 1.0
    return counts


def oracle_cosine(u, v) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return dot / (nu * nv)
