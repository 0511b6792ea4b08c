import random

import numpy as np

from pairdiff.backend.protocol import CAP_EMBED_IMAGE, CAP_ITM, CAP_SEGMENT, encode_image, encode_mask
from pairdiff.backend.scene import BACKGROUND, PALETTE
from pairdiff.backend.stubs import ScriptedStub
from pairdiff.imaging import RasterImage, crop
from pairdiff.removal import (
    ExistAbsentPair,
    build_mcq_sample,
    detect_object_regions,
    erase,
    removal_samples_for_pair,
    verify_removal,
)
from pairdiff.prompts import ANSWER_LEFT, ANSWER_RIGHT
from pairdiff.types import BBox
from pairdiff.util import derive_seed

from conftest import solid_image
from test_areas import scene_pair


def two_object_images():
    a = np.full((32, 32, 3), BACKGROUND, dtype=np.uint8)
    a[2:12, 2:12] = PALETTE["red"]       # the replaced object
    a[18:28, 18:28] = PALETTE["green"]   # shared object
    b = a.copy()
    b[2:12, 2:12] = PALETTE["blue"]
    return RasterImage(a), RasterImage(b)


class TestDetectObjectRegions:
    def test_scene_replaced_object_kept_shared_dropped(self, cfg, scene_backend):
        a, b = two_object_images()
        regions = detect_object_regions(a, b, cfg, scene_backend)
        assert [r.box.to_list() for r in regions] == [[2, 2, 12, 12]]
        assert regions[0].mask is not None

    def test_strict_boundary_on_scripted_sims(self, cfg):
        """Scripted sub-image sims {.95, .90, .85} against the 0.9 cut keep
        only the strictly-below one."""
        import math

        px_a = np.zeros((12, 36, 3), dtype=np.uint8)
        px_b = np.zeros((12, 36, 3), dtype=np.uint8)
        for i in range(3):
            px_a[:, i * 12 : (i + 1) * 12] = (i * 50 + 10, 0, 0)
            px_b[:, i * 12 : (i + 1) * 12] = (0, i * 50 + 10, 0)
        img_a, img_b = RasterImage(px_a), RasterImage(px_b)
        stub = ScriptedStub()
        regions = []
        for i, sim in enumerate((0.95, 0.90, 0.85)):
            box = [i * 12, 0, (i + 1) * 12, 12]
            mask = np.ones((12, 12), dtype=bool)
            regions.append({"box": box, "confidence": 0.9, "mask": encode_mask(mask)})
            sub_a = crop(img_a, BBox(*box))
            sub_b = crop(img_b, BBox(*box))
            stub.add(
                CAP_EMBED_IMAGE, {"image": encode_image(sub_a)}, None, {"embedding": [1.0, 0.0]}
            )
            stub.add(
                CAP_EMBED_IMAGE,
                {"image": encode_image(sub_b)},
                None,
                {"embedding": [sim, math.sqrt(1 - sim * sim)]},
            )
        stub.add(CAP_SEGMENT, {"image": encode_image(img_a)}, None, {"regions": regions})
        kept = detect_object_regions(img_a, img_b, cfg, stub)
        assert [r.box.x0 // 12 for r in kept] == [2]


class TestErase:
    def test_masked_region_filled_with_background(self, cfg, scene_backend, templates):
        a, b = two_object_images()
        regions = detect_object_regions(a, b, cfg, scene_backend)
        region = regions[0]
        out = erase(a, region.mask, region.box, scene_backend, 7, templates)
        assert (out.width, out.height) == (a.width, a.height)
        erased_crop = out.pixels[region.box.y0 : region.box.y1, region.box.x0 : region.box.x1]
        assert (erased_crop[region.mask] == BACKGROUND).all()
        # outside the box nothing changed
        outside = out.pixels.copy()
        outside[region.box.y0 : region.box.y1, region.box.x0 : region.box.x1] = 0
        original_outside = a.pixels.copy()
        original_outside[region.box.y0 : region.box.y1, region.box.x0 : region.box.x1] = 0
        assert np.array_equal(outside, original_outside)

    def test_empty_mask_is_identity(self, cfg, scene_backend, templates):
        a, _ = two_object_images()
        mask = np.zeros((10, 10), dtype=bool)
        out = erase(a, mask, BBox(2, 2, 12, 12), scene_backend, 7, templates)
        assert np.array_equal(out.pixels, a.pixels)

    def test_deterministic(self, cfg, scene_backend, templates):
        a, b = two_object_images()
        region = detect_object_regions(a, b, cfg, scene_backend)[0]
        out1 = erase(a, region.mask, region.box, scene_backend, 7, templates)
        out2 = erase(a, region.mask, region.box, scene_backend, 7, templates)
        assert out1.to_png_bytes() == out2.to_png_bytes()


class TestVerifyRemoval:
    def script(self, pos, neg):
        stub = ScriptedStub()
        sub_o = solid_image(8, 8, (50, 0, 0))
        sub_e = solid_image(8, 8, (0, 50, 0))
        stub.add(CAP_ITM, {"image": encode_image(sub_o), "text": "a thing"}, None, {"score": pos})
        stub.add(CAP_ITM, {"image": encode_image(sub_e), "text": "a thing"}, None, {"score": neg})
        return stub, sub_o, sub_e

    def test_clear_accept(self, cfg):
        stub, sub_o, sub_e = self.script(0.6, 0.1)
        assert verify_removal(sub_o, sub_e, "a thing", cfg, stub) is True

    def test_residual_signal_rejects(self, cfg):
        stub, sub_o, sub_e = self.script(0.6, 0.25)
        assert verify_removal(sub_o, sub_e, "a thing", cfg, stub) is False

    def test_positive_boundary_strict(self, cfg):
        stub, sub_o, sub_e = self.script(0.35, 0.1)
        assert verify_removal(sub_o, sub_e, "a thing", cfg, stub) is False

    def test_negative_boundary_strict(self, cfg):
        stub, sub_o, sub_e = self.script(0.6, 0.20)
        assert verify_removal(sub_o, sub_e, "a thing", cfg, stub) is False


class TestBuildMcqSample:
    def exist_absent(self, scene_backend, cfg, templates):
        a, b = two_object_images()
        region = detect_object_regions(a, b, cfg, scene_backend)[0]
        erased = erase(a, region.mask, region.box, scene_backend, 7, templates)
        return ExistAbsentPair(
            original=a, erased=erased, box=region.box, mask=region.mask, description="red square"
        )

    def test_left_placement_answers_a(self, cfg, scene_backend, templates, tmp_path):
        pair = self.exist_absent(scene_backend, cfg, templates)

        class AlwaysLeft(random.Random):
            def random(self):
                return 0.0

        sample = build_mcq_sample(pair, cfg, AlwaysLeft(), templates, tmp_path, "p-m")
        assert sample.conversation[1][1] == ANSWER_LEFT
        assert sample.provenance["object_side"] == "left"

        class AlwaysRight(random.Random):
            def random(self):
                return 0.9

        sample = build_mcq_sample(pair, cfg, AlwaysRight(), templates, tmp_path, "p-m")
        assert sample.conversation[1][1] == ANSWER_RIGHT
        assert sample.provenance["object_side"] == "right"

    def test_question_carries_description(self, cfg, scene_backend, templates, tmp_path):
        pair = self.exist_absent(scene_backend, cfg, templates)
        sample = build_mcq_sample(pair, cfg, random.Random(1), templates, tmp_path, "p-m")
        assert "'red square'" in sample.conversation[0][1]
        assert "A. the left image B. the right image." in sample.conversation[0][1]

    def test_shuffle_balance_over_seeded_rng(self, cfg, scene_backend, templates, tmp_path):
        pair = self.exist_absent(scene_backend, cfg, templates)
        lefts = 0
        n = 1000
        for i in range(n):
            rng = random.Random(derive_seed(cfg.seed, f"shuffle:balance:{i}"))
            sample = build_mcq_sample(pair, cfg, rng, templates, tmp_path, f"p-{i}")
            lefts += sample.provenance["object_side"] == "left"
        assert 0.45 <= lefts / n <= 0.55


class TestRemovalFlow:
    def test_scene_pair_end_to_end(self, cfg, templates, tmp_path):
        stub, cp, pair = scene_pair(index=1)
        counts = {}
        samples = removal_samples_for_pair(pair, cfg, stub, templates, tmp_path, counts)
        assert counts["accepted"] == len(samples) == 1
        assert counts["segmented"] >= counts["regions_detected"]
        sample = samples[0]
        assert sample.kind == "object_removal"
        answer = sample.conversation[1][1]
        assert answer in (ANSWER_LEFT, ANSWER_RIGHT)

    def test_post_hoc_itm_audit(self, cfg, templates, tmp_path):
        """The recorded answer side scores above the positive cut and the
        other side below the negative cut."""
        from pairdiff.filters import itm_score

        stub, cp, pair = scene_pair(index=1)
        samples = removal_samples_for_pair(pair, cfg, stub, templates, tmp_path, {})
        for sample in samples:
            concat = RasterImage.from_file(tmp_path / sample.concat_image_ref.split("/", 1)[1])
            w = pair.image_a.width
            left = RasterImage(concat.pixels[:, :w].copy())
            right = RasterImage(concat.pixels[:, w + cfg.divider_px :].copy())
            box = sample.box
            # red highlight occupies the box border; inspect the interior
            t = cfg.box_thickness_px
            inner = BBox(box.x0 + t, box.y0 + t, box.x1 - t, box.y1 - t)
            desc = sample.provenance["description"]
            object_img, erased_img = (
                (left, right) if sample.provenance["object_side"] == "left" else (right, left)
            )
            assert itm_score(crop(object_img, inner), desc, stub) > cfg.rm_itm_pos
            assert itm_score(crop(erased_img, inner), desc, stub) < cfg.rm_itm_neg

    def test_determinism(self, cfg, templates, tmp_path):
        stub, cp, pair = scene_pair(index=1)
        s1 = removal_samples_for_pair(pair, cfg, stub, templates, tmp_path / "a", {})
        s2 = removal_samples_for_pair(pair, cfg, stub, templates, tmp_path / "b", {})
        assert [s.to_dict() for s in s1] == [s.to_dict() for s in s2]
