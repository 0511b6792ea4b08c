import numpy as np

from pairdiff.areas import candidate_boxes, gate_valid_objects, generate
from pairdiff.backend import ops
from pairdiff.backend.protocol import CAP_ITM, encode_image
from pairdiff.backend.scene import (
    BACKGROUND,
    PALETTE,
    make_scene_captions,
    object_layout,
)
from pairdiff.backend.stubs import SceneStub, ScriptedStub
from pairdiff.filters import image_similarity, itm_score
from pairdiff.imaging import RasterImage, crop
from pairdiff.types import BBox, CaptionPair, ImagePair, RegionCandidate
from pairdiff.util import derive_seed

from conftest import dummy_caption_pair, make_pair, oracle_iou


def scene_pair(index=1, n=8, seed=3, run_seed=0):
    """Generate one scene image pair through the stub backend."""
    stub = SceneStub()
    from pairdiff.prompts import PromptTemplates

    t = PromptTemplates()
    sid, cap = make_scene_captions(n, seed=seed)[index]
    cp = ops.rewrite_caption(cap, sid, derive_seed(run_seed, f"rewrite:{sid}"), stub, t)
    pair = ops.generate_pair(cp, derive_seed(run_seed, sid), stub, f"p-{sid}")
    return stub, cp, pair


class TestCandidateBoxes:
    def test_two_shapes_give_four_candidates(self, cfg):
        stub, cp, pair = scene_pair(index=1)  # two-object scene
        cands = candidate_boxes(pair, cfg, stub)
        assert len(cands) == 4
        assert {c.side for c in cands} == {"a", "b"}

    def test_blank_pair_empty(self, cfg, scene_backend):
        blank = RasterImage.filled(32, 32, BACKGROUND)
        pair = make_pair(blank, blank)
        assert candidate_boxes(pair, cfg, scene_backend) == []


class TestGateValidObjects:
    def test_itm_boundary_strict(self, cfg):
        """Six candidates with scripted ITM {.1,.2,.35,.36,.5,.9}; threshold
        .35 keeps exactly the three strictly above."""
        px = np.zeros((12, 72, 3), dtype=np.uint8)
        for i in range(6):
            px[:, i * 12 : (i + 1) * 12] = (i * 40 + 5, 0, 0)
        image = RasterImage(px)
        pair = make_pair(image, image, "p-itm")
        scores = [0.1, 0.2, 0.35, 0.36, 0.5, 0.9]
        stub = ScriptedStub()
        cands = []
        for i, score in enumerate(scores):
            box = BBox(i * 12, 0, (i + 1) * 12, 12)
            sub = crop(image, box)
            stub.add(
                CAP_ITM,
                {"image": encode_image(sub), "text": pair.captions.replaced_object},
                None,
                {"score": score},
            )
            stub.add(
                CAP_ITM,
                {"image": encode_image(sub), "text": pair.captions.replacement_object},
                None,
                {"score": 0.0},
            )
            cands.append(RegionCandidate(box=box, seg_confidence=0.9, side="a"))
        kept = gate_valid_objects(pair, cands, cfg, stub)
        assert [c.box.x0 // 12 for c in kept] == [3, 4, 5]

    def test_background_crop_dropped_object_crop_kept(self, cfg, scene_backend):
        px = np.full((32, 32, 3), BACKGROUND, dtype=np.uint8)
        px[2:12, 2:12] = PALETTE["red"]
        image = RasterImage(px)
        pair = ImagePair(
            image_a=image,
            image_b=RasterImage.filled(32, 32, BACKGROUND),
            captions=dummy_caption_pair("p-g"),
            seed=0,
            pair_id="p-g",
        )
        obj = RegionCandidate(box=BBox(2, 2, 12, 12), seg_confidence=0.9, side="a")
        bg = RegionCandidate(box=BBox(20, 20, 30, 30), seg_confidence=0.9, side="a")
        kept = gate_valid_objects(pair, [obj, bg], cfg, scene_backend)
        assert kept == [obj]

    def test_either_replacement_text_counts(self, cfg, scene_backend):
        # crop matches the replacement object name, not the replaced one
        px = np.full((16, 16, 3), BACKGROUND, dtype=np.uint8)
        px[3:13, 3:13] = PALETTE["blue"]
        image = RasterImage(px)  # "blue circle"? no: solid block is a square
        pair = ImagePair(
            image_a=image,
            image_b=image,
            captions=CaptionPair(
                original="a red square",
                edited="a blue square",
                replaced_object="red square",
                replacement_object="blue square",
                source_id="s",
            ),
            seed=0,
            pair_id="p-e",
        )
        cand = RegionCandidate(box=BBox(3, 3, 13, 13), seg_confidence=0.9, side="a")
        assert gate_valid_objects(pair, [cand], cfg, scene_backend) == [cand]


class TestGenerate:
    def test_single_difference_found_at_ground_truth(self, cfg):
        stub, cp, pair = scene_pair(index=1)
        areas = generate(pair, cfg, stub)
        assert len(areas.regions) == 1
        # which object was replaced determines the expected slot
        from pairdiff.backend.scene import parse_caption

        original_objects = parse_caption(cp.original)
        replaced_idx = next(
            i for i, o in enumerate(original_objects) if o.phrase == cp.replaced_object
        )
        assert areas.regions[0].box == object_layout(pair.seed, replaced_idx)

    def test_identical_images_zero_regions(self, cfg, scene_backend):
        px = np.full((32, 32, 3), BACKGROUND, dtype=np.uint8)
        px[4:14, 4:14] = PALETTE["red"]
        image = RasterImage(px)
        pair = ImagePair(
            image_a=image,
            image_b=RasterImage(px.copy()),
            captions=dummy_caption_pair("p-i"),
            seed=0,
            pair_id="p-i",
        )
        areas = generate(pair, cfg, scene_backend)
        assert areas.regions == ()
        assert areas.stage_counts["difference"]["kept"] == 0

    def test_stage_counts_monotone_and_conserved(self, cfg):
        for index in range(6):
            stub, cp, pair = scene_pair(index=index)
            areas = generate(pair, cfg, stub)
            sc = areas.stage_counts
            chain = ["itm_gate", "difference", "suppression"]
            assert sc["itm_gate"]["in"] == sc["candidates"]["produced"]
            for a, b in zip(chain, chain[1:]):
                assert sc[b]["in"] == sc[a]["kept"]
            for gate in chain:
                assert sc[gate]["kept"] <= sc[gate]["in"]

    def test_matches_straight_line_oracle(self, cfg):
        """generate() equals a direct restatement of the gate chain for
        scenes of up to 4 shapes per image (8 total)."""
        for index in range(9):
            stub, cp, pair = scene_pair(index=index, n=9, seed=11)
            got = generate(pair, cfg, stub)

            # oracle: exhaustive evaluation in plain loops
            seg_a = ops.segment(pair.image_a, cfg.seg_conf, cfg.iou, stub, side="a")
            seg_b = ops.segment(pair.image_b, cfg.seg_conf, cfg.iou, stub, side="b")
            survivors = []
            for cand in list(seg_a.regions) + list(seg_b.regions):
                side_img = pair.image_a if cand.side == "a" else pair.image_b
                s1 = itm_score(crop(side_img, cand.box), cp.replaced_object, stub)
                s2 = itm_score(crop(side_img, cand.box), cp.replacement_object, stub)
                if max(s1, s2) <= cfg.bitm:
                    continue
                sim = image_similarity(
                    crop(pair.image_a, cand.box), crop(pair.image_b, cand.box), stub
                )
                if not sim < cfg.diff_sim:
                    continue
                import dataclasses

                survivors.append(dataclasses.replace(cand, difference=1.0 - sim))
            expected = []
            order = sorted(
                survivors,
                key=lambda c: (-c.difference, c.box.area, c.box.x0, c.box.y0, c.box.x1, c.box.y1),
            )
            for cand in order:
                if all(oracle_iou(cand.box, k.box) <= cfg.iou for k in expected):
                    expected.append(cand)

            assert [(r.box, r.side, r.difference) for r in got.regions] == [
                (r.box, r.side, r.difference) for r in expected
            ]

    def test_region_invariants_post_hoc(self, cfg):
        """Re-verify every final region against the raw gates."""
        stub, cp, pair = scene_pair(index=4, n=6, seed=7)
        areas = generate(pair, cfg, stub)
        for i, r in enumerate(areas.regions):
            side_img = pair.image_a if r.side == "a" else pair.image_b
            best = max(
                itm_score(crop(side_img, r.box), cp.replaced_object, stub),
                itm_score(crop(side_img, r.box), cp.replacement_object, stub),
            )
            assert best > cfg.bitm
            sim = image_similarity(
                crop(pair.image_a, r.box), crop(pair.image_b, r.box), stub
            )
            assert sim < cfg.diff_sim
            for other in areas.regions[i + 1 :]:
                assert oracle_iou(r.box, other.box) <= cfg.iou
