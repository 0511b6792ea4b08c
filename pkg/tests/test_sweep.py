import json

import pytest

from pairdiff.backend.scene import make_scene_captions
from pairdiff.backend.stubs import SceneStub
from pairdiff.config import ThresholdConfig
from pairdiff.prompts import PromptTemplates
from pairdiff.sweep import (
    PoolRow,
    build_candidate_pool,
    config_dominates,
    pool_survivors,
    row_survives,
    sweep,
)
from pairdiff.synthesis import CaptionSource, synthesize_caption_pairs, synthesize_image_pairs
from pairdiff.util import stable_hash64


def synthetic_pool(n=200, seed=0) -> list[PoolRow]:
    """Deterministic pseudo-random pool rows spanning all score ranges."""
    rows = []
    for i in range(n):
        h = stable_hash64(f"pool:{seed}:{i}")

        def unit(shift):
            return ((h >> shift) % 10_000) / 10_000.0

        rows.append(
            PoolRow(
                pair_id=f"p-{i}",
                box=(0, 0, 8, 8),
                pair_similarity=unit(0),
                best_itm=unit(8),
                sub_similarity=unit(16),
                citm_a=unit(24),
                citm_b=unit(32),
                caption_cosine=unit(40),
            )
        )
    return rows


# the four ablation combinations compared in sweeps, loosest to strictest
ABLATION_CONFIGS = [
    ThresholdConfig(bitm=0.30, cs=0.90, citm=0.30),
    ThresholdConfig(bitm=0.35, cs=0.90, citm=0.30),
    ThresholdConfig(bitm=0.35, cs=0.85, citm=0.40),
    ThresholdConfig(is_low=0.85, bitm=0.35, cs=0.85, citm=0.40),
]


class TestDominance:
    def test_ablation_chain(self):
        c1, c2, c3, c4 = ABLATION_CONFIGS
        assert config_dominates(c2, c1)
        assert config_dominates(c3, c2)
        assert config_dominates(c3, c4)  # narrower band is stricter
        assert not config_dominates(c1, c2)

    def test_identical_configs_dominate_both_ways(self):
        a = ThresholdConfig()
        assert config_dominates(a, a)


class TestPoolSurvivors:
    def test_row_predicate_matches_conventions(self):
        row = PoolRow("p", (0, 0, 1, 1), 0.94, 0.36, 0.80, 0.41, 0.41, 0.80)
        assert row_survives(row, ThresholdConfig())
        # boundary: itm exactly at threshold fails (strict >)
        row = PoolRow("p", (0, 0, 1, 1), 0.94, 0.35, 0.80, 0.41, 0.41, 0.80)
        assert not row_survives(row, ThresholdConfig())
        # boundary: band edges are inclusive
        row = PoolRow("p", (0, 0, 1, 1), 0.90, 0.36, 0.80, 0.41, 0.41, 0.80)
        assert row_survives(row, ThresholdConfig())
        row = PoolRow("p", (0, 0, 1, 1), 0.98, 0.36, 0.80, 0.41, 0.41, 0.80)
        assert row_survives(row, ThresholdConfig())

    def test_tightening_each_threshold_contains(self):
        pool = synthetic_pool(500)
        base = ThresholdConfig(is_low=0.3, is_high=0.9, bitm=0.3, diff_sim=0.7, citm=0.3, cs=0.7)
        tighter = {
            "is_low": base.replace(is_low=0.5),
            "is_high": base.replace(is_high=0.8),
            "bitm": base.replace(bitm=0.5),
            "diff_sim": base.replace(diff_sim=0.5),
            "citm": base.replace(citm=0.5),
            "cs": base.replace(cs=0.5),
        }
        loose = pool_survivors(pool, base)
        for name, cfg in tighter.items():
            assert pool_survivors(pool, cfg) <= loose, name


class TestSweepReport:
    def test_needs_two_configs(self):
        with pytest.raises(ValueError):
            sweep([ThresholdConfig()], [])

    def test_synthetic_pool_containment_report(self, tmp_path):
        pool = synthetic_pool(300)
        report = sweep(ABLATION_CONFIGS, pool, tmp_path / "sweep.json")
        assert report["pool_size"] == 300
        assert all(comp["contained"] for comp in report["comparisons"])
        assert json.loads((tmp_path / "sweep.json").read_text()) == report

    def test_identical_configs_identical_survivors(self):
        pool = synthetic_pool(100)
        report = sweep([ThresholdConfig(), ThresholdConfig()], pool)
        assert report["survivor_counts"][0] == report["survivor_counts"][1]

    def test_scene_generated_pool_containment(self):
        backend = SceneStub()
        templates = PromptTemplates()
        base = ABLATION_CONFIGS[0]
        source = CaptionSource(tuple(make_scene_captions(10, seed=5)))
        caption_pairs = synthesize_caption_pairs(source, backend, 0, templates)
        pairs = synthesize_image_pairs(caption_pairs, backend, 0)
        pool = build_candidate_pool(pairs, base, backend, templates)
        assert pool, "scene pool should not be empty"
        report = sweep(ABLATION_CONFIGS, pool)
        assert all(comp["contained"] for comp in report["comparisons"])
        # narrower IS band never keeps more than the wider one
        narrow = pool_survivors(pool, ABLATION_CONFIGS[2])
        wide = pool_survivors(pool, ABLATION_CONFIGS[3])
        assert narrow <= wide
