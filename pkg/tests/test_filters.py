import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairdiff.backend.protocol import (
    CAP_EMBED_IMAGE,
    CAP_EMBED_TEXT,
    CAP_ITM,
    encode_image,
)
from pairdiff.backend.stubs import ScriptedStub
from pairdiff.filters import (
    BAND_DROPPED_HIGH,
    BAND_DROPPED_LOW,
    BAND_KEPT,
    BAND_QUARANTINED,
    band_filter_pairs,
    caption_similarity_gate,
    cosine_similarity,
    difference_detector,
    image_similarity,
    itm_score,
)
from pairdiff.types import BBox, RegionCandidate, ValidationError

from conftest import make_pair, oracle_cosine, oracle_histogram, solid_image


class TestCosine:
    def test_identity(self):
        assert cosine_similarity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_orthogonal_exact(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_45_degrees(self):
        assert abs(cosine_similarity([1.0, 0.0], [1.0, 1.0]) - math.sqrt(0.5)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError, match="dimension"):
            cosine_similarity([1.0], [1.0, 2.0])

    def test_zero_vector(self):
        with pytest.raises(ValidationError, match="zero"):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_non_finite(self):
        with pytest.raises(ValidationError, match="finite"):
            cosine_similarity([float("nan"), 1.0], [1.0, 1.0])

    vectors = st.lists(
        st.floats(-100, 100).filter(lambda v: abs(v) > 1e-3), min_size=2, max_size=8
    )

    @given(u=vectors, v=vectors)
    @settings(max_examples=100, deadline=None)
    def test_symmetry_and_bound(self, u, v):
        if len(u) != len(v):
            v = (v * len(u))[: len(u)]
        s = cosine_similarity(u, v)
        assert s == cosine_similarity(v, u)
        assert abs(s) <= 1 + 1e-9

    @given(u=vectors, alpha=st.floats(1e-3, 1e3))
    @settings(max_examples=100, deadline=None)
    def test_scale_invariance(self, u, alpha):
        v = [x * 0.5 + 1.0 for x in u]
        assert cosine_similarity([alpha * x for x in u], v) == pytest.approx(
            cosine_similarity(u, v), abs=1e-9
        )


class TestImageSimilarity:
    def test_identical_images(self, scene_backend):
        img = solid_image(8, 8, (220, 30, 30))
        assert image_similarity(img, img, scene_backend) == pytest.approx(1.0)

    def test_red_vs_blue_square_matches_histogram_oracle(self, scene_backend):
        red = solid_image(8, 8, (220, 30, 30))
        blue = solid_image(8, 8, (30, 30, 220))
        got = image_similarity(red, blue, scene_backend)
        expected = oracle_cosine(oracle_histogram(red), oracle_histogram(blue))
        assert got == pytest.approx(expected, abs=1e-12)

    def test_mixed_scene_matches_oracle(self, scene_backend):
        import numpy as np
        from pairdiff.imaging import RasterImage

        rng = np.random.default_rng(5)
        a = RasterImage(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        b = RasterImage(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        assert image_similarity(a, b, scene_backend) == pytest.approx(
            oracle_cosine(oracle_histogram(a), oracle_histogram(b)), abs=1e-12
        )


def unit_vec(cosine: float) -> list[float]:
    return [cosine, math.sqrt(max(0.0, 1.0 - cosine * cosine))]


def scripted_band_fixture():
    """Three pairs with scripted similarities 0.99, 0.94, 0.70."""
    stub = ScriptedStub()
    pairs = []
    for i, sim in enumerate((0.99, 0.94, 0.70)):
        a = solid_image(4, 4, (i * 10, 0, 0))
        b = solid_image(4, 4, (i * 10, 0, 50))
        stub.add(CAP_EMBED_IMAGE, {"image": encode_image(a)}, None, {"embedding": [1.0, 0.0]})
        stub.add(CAP_EMBED_IMAGE, {"image": encode_image(b)}, None, {"embedding": unit_vec(sim)})
        pairs.append(make_pair(a, b, pair_id=f"p-{i}"))
    return stub, pairs


class TestBandFilter:
    def test_scripted_band_selection(self):
        stub, pairs = scripted_band_fixture()
        decisions = band_filter_pairs(pairs, 0.90, 0.98, stub)
        assert [d.status for d in decisions] == [
            BAND_DROPPED_HIGH,
            BAND_KEPT,
            BAND_DROPPED_LOW,
        ]
        kept = [d for d in decisions if d.status == BAND_KEPT]
        assert kept[0].pair.pair_id == "p-1"
        assert kept[0].score == pytest.approx(0.94, abs=1e-9)

    def test_identical_pair_dropped_high(self, scene_backend):
        img = solid_image(6, 6, (30, 160, 30))
        pair = make_pair(img, img)
        (decision,) = band_filter_pairs([pair], 0.90, 0.98, scene_backend)
        assert decision.status == BAND_DROPPED_HIGH
        assert decision.score == pytest.approx(1.0)

    def test_backend_failure_quarantines_item_only(self):
        stub, pairs = scripted_band_fixture()
        broken = make_pair(solid_image(4, 4, (99, 99, 99)), solid_image(4, 4, (98, 98, 98)), "p-x")
        decisions = band_filter_pairs([broken] + pairs, 0.90, 0.98, stub)
        assert decisions[0].status == BAND_QUARANTINED
        assert [d.status for d in decisions[1:]] == [
            BAND_DROPPED_HIGH,
            BAND_KEPT,
            BAND_DROPPED_LOW,
        ]

    def test_order_preserved_and_contraction(self):
        stub, pairs = scripted_band_fixture()
        decisions = band_filter_pairs(pairs, 0.90, 0.98, stub, max_in_flight=3)
        assert [d.pair.pair_id for d in decisions] == ["p-0", "p-1", "p-2"]
        kept = [d for d in decisions if d.status == BAND_KEPT]
        assert len(kept) <= len(pairs)

    def test_bad_band(self):
        with pytest.raises(ValidationError):
            band_filter_pairs([], 0.9, 0.9, ScriptedStub())


class TestItmScore:
    def test_scripted_value(self):
        stub = ScriptedStub()
        img = solid_image(4, 4, (1, 2, 3))
        stub.add(CAP_ITM, {"image": encode_image(img), "text": "a horse"}, None, {"score": 0.6})
        assert itm_score(img, "a horse", stub) == 0.6

    def test_scene_token_overlap(self, scene_backend):
        img = solid_image(8, 8, (220, 30, 30))  # all red, classifies as square
        assert itm_score(img, "red square", scene_backend) == 1.0
        assert itm_score(img, "blue circle", scene_backend) == 0.0
        assert itm_score(img, "red circle", scene_backend) == 0.5

    def test_empty_text_rejected(self, scene_backend):
        with pytest.raises(ValidationError):
            itm_score(solid_image(4, 4, (0, 0, 0)), "", scene_backend)


class TestCaptionGate:
    def test_identical_captions_not_different(self, scene_backend):
        assert caption_similarity_gate("a red square", "a red square", 0.85, scene_backend) is False

    def test_scripted_cosine_below_threshold_passes(self):
        stub = ScriptedStub()
        stub.add(CAP_EMBED_TEXT, {"text": "left"}, None, {"embedding": [1.0, 0.0]})
        stub.add(CAP_EMBED_TEXT, {"text": "right"}, None, {"embedding": unit_vec(0.80)})
        assert caption_similarity_gate("left", "right", 0.85, stub) is True

    def test_boundary_is_strict(self):
        # cosine of (1,0) and (3,4) is exactly 3/5 = 0.6 in float
        stub = ScriptedStub()
        stub.add(CAP_EMBED_TEXT, {"text": "left"}, None, {"embedding": [1.0, 0.0]})
        stub.add(CAP_EMBED_TEXT, {"text": "right"}, None, {"embedding": [3.0, 4.0]})
        assert caption_similarity_gate("left", "right", 0.6, stub) is False
        assert caption_similarity_gate("left", "right", 0.6000001, stub) is True

    def test_empty_caption_rejected(self, scene_backend):
        with pytest.raises(ValidationError):
            caption_similarity_gate("", "x", 0.85, scene_backend)


class TestDifferenceDetector:
    def make_scene_pair(self):
        import numpy as np
        from pairdiff.backend.scene import BACKGROUND, PALETTE
        from pairdiff.imaging import RasterImage

        a = np.empty((32, 32, 3), dtype=np.uint8)
        a[:, :] = BACKGROUND
        b = a.copy()
        a[4:14, 4:14] = PALETTE["red"]       # replaced region differs
        b[4:14, 4:14] = PALETTE["blue"]
        a[20:30, 20:30] = PALETTE["green"]   # shared object, identical
        b[20:30, 20:30] = PALETTE["green"]
        return make_pair(RasterImage(a), RasterImage(b))

    def test_identical_region_dropped(self, scene_backend):
        pair = self.make_scene_pair()
        same = RegionCandidate(box=BBox(20, 20, 30, 30), seg_confidence=0.9)
        assert difference_detector(pair, [same], 0.85, scene_backend) == []

    def test_differing_region_kept_with_oracle_difference(self, scene_backend):
        from pairdiff.imaging import crop

        pair = self.make_scene_pair()
        diff_box = RegionCandidate(box=BBox(4, 4, 14, 14), seg_confidence=0.9)
        (kept,) = difference_detector(pair, [diff_box], 0.85, scene_backend)
        sub_a = crop(pair.image_a, diff_box.box)
        sub_b = crop(pair.image_b, diff_box.box)
        expected_sim = oracle_cosine(oracle_histogram(sub_a), oracle_histogram(sub_b))
        assert kept.difference == pytest.approx(1.0 - expected_sim, abs=1e-12)

    def test_empty_input(self, scene_backend):
        assert difference_detector(self.make_scene_pair(), [], 0.85, scene_backend) == []

    def test_survivors_satisfy_predicate(self, scene_backend):
        from pairdiff.imaging import crop

        pair = self.make_scene_pair()
        boxes = [
            RegionCandidate(box=BBox(4, 4, 14, 14), seg_confidence=0.9),
            RegionCandidate(box=BBox(20, 20, 30, 30), seg_confidence=0.9),
            RegionCandidate(box=BBox(0, 0, 32, 32), seg_confidence=0.9),
        ]
        out = difference_detector(pair, boxes, 0.85, scene_backend)
        assert len(out) <= len(boxes)
        for cand in out:
            sim = image_similarity(
                crop(pair.image_a, cand.box), crop(pair.image_b, cand.box), scene_backend
            )
            assert sim < 0.85
            assert cand.difference == pytest.approx(1.0 - sim)
