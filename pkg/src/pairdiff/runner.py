"""Staged pipeline execution with checkpoints and resume.

Stages run in a fixed order, each reading its inputs from the previous
stage's on-disk checkpoint and writing its own outputs into a temp
directory that is atomically renamed on completion. Because every stage
exchanges data through files and every backend call goes through a
read-through recording transcript, a killed run resumed later produces
byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .areas import generate as generate_areas
from .backend import RecordingBackend, ReplayBackend, Transcript, resolve_backend
from .backend.protocol import Backend, BackendError
from .captions import (
    RegionRejection,
    build_sample,
    difference_caption,
    label_region,
    select_regions,
)
from .areas import DifferenceAreas
from .config import ThresholdConfig, save_config
from .dataset import diversity_report, emit_dataset, read_samples, write_reports
from .funnel import Funnel, QuarantineError, QuarantineRecord, write_quarantines
from .imaging import RasterImage
from .prompts import PromptTemplates
from .removal import removal_samples_for_pair
from .synthesis import (
    CaptionSource,
    prefilter_pairs,
    synthesize_caption_pairs,
    synthesize_image_pairs,
)
from .types import BBox, CaptionPair, DifferenceSample, ImagePair, RegionCandidate
from .util import sha256_file

STAGE_SYNTH_CAPTIONS = "synth-captions"
STAGE_SYNTH_PAIRS = "synth-pairs"
STAGE_PREFILTER = "prefilter"
STAGE_DIFF_AREAS = "diff-areas"
STAGE_DIFF_CAPTIONS = "diff-captions"
STAGE_OBJECT_REMOVAL = "object-removal"
STAGE_EMIT = "emit"
STAGE_STATS = "stats"

STAGE_ORDER = (
    STAGE_SYNTH_CAPTIONS,
    STAGE_SYNTH_PAIRS,
    STAGE_PREFILTER,
    STAGE_DIFF_AREAS,
    STAGE_DIFF_CAPTIONS,
    STAGE_OBJECT_REMOVAL,
    STAGE_EMIT,
    STAGE_STATS,
)

RUN_STATE_NAME = "run_state.json"


class RunnerError(RuntimeError):
    pass


class ConfigDigestMismatch(RunnerError):
    """Resume attempted with a config differing from the original run's."""


class AbortInjected(RuntimeError):
    """Raised by test hooks to simulate a mid-run kill."""


@dataclass
class RunState:
    run_id: str
    config_digest: str
    seed: int
    completed: list[str] = field(default_factory=list)
    transcript: str = "transcript.jsonl"

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "completed": self.completed,
            "transcript": self.transcript,
        }

    def save(self, out_dir: Path) -> None:
        tmp = out_dir / (RUN_STATE_NAME + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        tmp.replace(out_dir / RUN_STATE_NAME)

    @classmethod
    def load(cls, out_dir: Path) -> "RunState":
        d = json.loads((out_dir / RUN_STATE_NAME).read_text())
        return cls(
            run_id=d["run_id"],
            config_digest=d["config_digest"],
            seed=d["seed"],
            completed=list(d["completed"]),
            transcript=d["transcript"],
        )


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


class PipelineRunner:
    """Owns one output directory and executes pipeline stages into it."""

    def __init__(
        self,
        out_dir: str | Path,
        cfg: ThresholdConfig,
        captions_path: str | Path,
        backend_uri: Optional[str] = None,
        templates: Optional[PromptTemplates] = None,
        vocab: Optional[list[str]] = None,
        item_hook: Optional[Callable[[str, int], None]] = None,
        backend: Optional[Backend] = None,
    ):
        self.out_dir = Path(out_dir)
        self.cfg = cfg
        self.captions_path = Path(captions_path)
        self.backend_uri = backend_uri
        self.templates = templates or PromptTemplates()
        self.vocab = vocab
        self.item_hook = item_hook or (lambda stage, idx: None)
        self._backend: Optional[Backend] = backend

    # --- plumbing ---------------------------------------------------------

    @property
    def stages_dir(self) -> Path:
        return self.out_dir / "stages"

    def stage_dir(self, stage: str) -> Path:
        return self.stages_dir / stage

    @property
    def dataset_dir(self) -> Path:
        return self.out_dir / "dataset"

    def backend(self) -> Backend:
        if self._backend is None:
            transcript = Transcript(self.out_dir / "transcript.jsonl")
            self._backend = RecordingBackend(resolve_backend(self.backend_uri), transcript)
        return self._backend

    def _run_id(self) -> str:
        blob = self.cfg.digest() + sha256_file(self.captions_path)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def _hooked(self, stage: str):
        counter = {"n": 0}

        def hook():
            idx = counter["n"]
            counter["n"] += 1
            self.item_hook(stage, idx)

        return hook

    # --- stage implementations ---------------------------------------------
    # Each takes the temp directory it must fill and returns nothing.

    def _stage_synth_captions(self, dest: Path) -> None:
        source = CaptionSource.from_jsonl(self.captions_path)
        funnel = Funnel()
        hook = self._hooked(STAGE_SYNTH_CAPTIONS)
        records = []
        for record in source.records:
            hook()
            records.append(record)
        pairs = synthesize_caption_pairs(
            CaptionSource(tuple(records)),
            self.backend(),
            self.cfg.seed,
            self.templates,
            funnel,
            max_in_flight=self.cfg.max_in_flight,
        )
        _write_jsonl(dest / "caption_pairs.jsonl", [p.to_dict() for p in pairs])
        (dest / "funnel.json").write_text(json.dumps(funnel.to_dict(), sort_keys=True))
        write_quarantines(dest / "quarantine.jsonl", funnel.quarantines)

    def _load_caption_pairs(self) -> list[CaptionPair]:
        path = self.stage_dir(STAGE_SYNTH_CAPTIONS) / "caption_pairs.jsonl"
        return [CaptionPair.from_dict(d) for d in _read_jsonl(path)]

    def _stage_synth_pairs(self, dest: Path) -> None:
        caption_pairs = self._load_caption_pairs()
        funnel = Funnel()
        hook = self._hooked(STAGE_SYNTH_PAIRS)

        pairs_dir = dest / "pairs"
        pairs_dir.mkdir(parents=True)
        listing = []
        image_pairs = synthesize_image_pairs(
            caption_pairs,
            self.backend(),
            self.cfg.seed,
            funnel,
            max_in_flight=self.cfg.max_in_flight,
        )
        for pair in image_pairs:
            hook()
            pair.image_a.save_png(pairs_dir / f"{pair.pair_id}_a.png")
            pair.image_b.save_png(pairs_dir / f"{pair.pair_id}_b.png")
            sidecar = {
                "pair_id": pair.pair_id,
                "seed": pair.seed,
                "captions": pair.captions.to_dict(),
            }
            (pairs_dir / f"{pair.pair_id}.json").write_text(
                json.dumps(sidecar, sort_keys=True)
            )
            listing.append({"pair_id": pair.pair_id})
        _write_jsonl(dest / "pairs.jsonl", listing)
        (dest / "funnel.json").write_text(json.dumps(funnel.to_dict(), sort_keys=True))
        write_quarantines(dest / "quarantine.jsonl", funnel.quarantines)

    @staticmethod
    def _load_pair(pairs_dir: Path, pair_id: str) -> ImagePair:
        sidecar = json.loads((pairs_dir / f"{pair_id}.json").read_text())
        return ImagePair(
            image_a=RasterImage.from_file(pairs_dir / f"{pair_id}_a.png"),
            image_b=RasterImage.from_file(pairs_dir / f"{pair_id}_b.png"),
            captions=CaptionPair.from_dict(sidecar["captions"]),
            seed=sidecar["seed"],
            pair_id=pair_id,
        )

    def _load_generated_pairs(self) -> list[ImagePair]:
        stage = self.stage_dir(STAGE_SYNTH_PAIRS)
        ids = [d["pair_id"] for d in _read_jsonl(stage / "pairs.jsonl")]
        return [self._load_pair(stage / "pairs", pid) for pid in ids]

    def _stage_prefilter(self, dest: Path) -> None:
        pairs = self._load_generated_pairs()
        funnel = Funnel()
        hook = self._hooked(STAGE_PREFILTER)
        for _ in pairs:
            hook()
        kept = prefilter_pairs(pairs, self.cfg, self.backend(), funnel)

        store = dest / "pairs"
        store.mkdir(parents=True)
        listing = []
        for pair, score in kept:
            pair.image_a.save_png(store / f"{pair.pair_id}_a.png")
            pair.image_b.save_png(store / f"{pair.pair_id}_b.png")
            sidecar = {
                "pair_id": pair.pair_id,
                "seed": pair.seed,
                "captions": pair.captions.to_dict(),
                "similarity": score,
            }
            (store / f"{pair.pair_id}.json").write_text(json.dumps(sidecar, sort_keys=True))
            listing.append({"pair_id": pair.pair_id, "similarity": score})
        _write_jsonl(dest / "kept.jsonl", listing)
        (dest / "funnel.json").write_text(json.dumps(funnel.to_dict(), sort_keys=True))
        write_quarantines(dest / "quarantine.jsonl", funnel.quarantines)

    def _load_kept_pairs(self) -> list[ImagePair]:
        stage = self.stage_dir(STAGE_PREFILTER)
        ids = [d["pair_id"] for d in _read_jsonl(stage / "kept.jsonl")]
        return [self._load_pair(stage / "pairs", pid) for pid in ids]

    def _stage_diff_areas(self, dest: Path) -> None:
        pairs = self._load_kept_pairs()
        funnel = Funnel()
        pair_stage = funnel.stage(STAGE_DIFF_AREAS, unit="pairs", chain="pairs")
        hook = self._hooked(STAGE_DIFF_AREAS)

        def run_one(pair: ImagePair):
            try:
                return generate_areas(pair, self.cfg, self.backend())
            except BackendError as e:
                return ("quarantine", pair.pair_id, e.code, e.message)

        outcomes = []
        for pair in pairs:
            hook()
            outcomes.append(run_one(pair))

        totals = {"candidates": 0, "itm": [0, 0, 0], "diff": [0, 0, 0], "nms": [0, 0]}
        records = []
        for outcome in outcomes:
            pair_stage.n_in += 1
            if isinstance(outcome, DifferenceAreas):
                records.append(outcome.to_dict())
                sc = outcome.stage_counts
                totals["candidates"] += sc["candidates"]["produced"]
                for key, tag in (("itm", "itm_gate"), ("diff", "difference")):
                    totals[key][0] += sc[tag]["in"]
                    totals[key][1] += sc[tag]["kept"]
                    totals[key][2] += sc[tag]["quarantined"]
                totals["nms"][0] += sc["suppression"]["in"]
                totals["nms"][1] += sc["suppression"]["kept"]
                if outcome.regions:
                    pair_stage.kept += 1
                else:
                    pair_stage.dropped["no_regions"] += 1
            else:
                _, pair_id, reason, detail = outcome
                funnel.quarantine(pair_stage, pair_id, reason, detail)

        cand_stage = funnel.stage("region-candidates", unit="regions", chain="regions")
        cand_stage.n_in = cand_stage.kept = totals["candidates"]
        itm_stage = funnel.stage("region-itm-gate", unit="regions", chain="regions")
        itm_stage.n_in, itm_stage.kept, itm_stage.quarantined = totals["itm"]
        itm_stage.dropped["itm_below"] = (
            itm_stage.n_in - itm_stage.kept - itm_stage.quarantined
        )
        diff_stage = funnel.stage("region-difference", unit="regions", chain="regions")
        diff_stage.n_in, diff_stage.kept, diff_stage.quarantined = totals["diff"]
        diff_stage.dropped["similar_subimages"] = (
            diff_stage.n_in - diff_stage.kept - diff_stage.quarantined
        )
        nms_stage = funnel.stage("region-suppression", unit="regions", chain="regions")
        nms_stage.n_in, nms_stage.kept = totals["nms"]
        nms_stage.dropped["overlap_suppressed"] = nms_stage.n_in - nms_stage.kept

        _write_jsonl(dest / "areas.jsonl", records)
        (dest / "funnel.json").write_text(json.dumps(funnel.to_dict(), sort_keys=True))
        write_quarantines(dest / "quarantine.jsonl", funnel.quarantines)

    def _load_areas(self) -> list[DifferenceAreas]:
        records = _read_jsonl(self.stage_dir(STAGE_DIFF_AREAS) / "areas.jsonl")
        areas = []
        for rec in records:
            regions = tuple(
                RegionCandidate(
                    box=BBox.from_list(r["box"]),
                    seg_confidence=r["seg_confidence"],
                    difference=r["difference"],
                    side=r["side"],
                )
                for r in rec["regions"]
            )
            areas.append(
                DifferenceAreas(
                    pair_id=rec["pair_id"], regions=regions, stage_counts=rec["stage_counts"]
                )
            )
        return areas

    def _stage_diff_captions(self, dest: Path) -> None:
        pairs = {p.pair_id: p for p in self._load_kept_pairs()}
        all_areas = self._load_areas()
        funnel = Funnel()
        select_stage = funnel.stage("region-select", unit="regions", chain="regions")
        label_stage = funnel.stage("region-label", unit="regions", chain="regions")
        caption_stage = funnel.stage("region-caption", unit="regions", chain="regions")
        hook = self._hooked(STAGE_DIFF_CAPTIONS)

        images_dir = dest / "images"
        rejections = []
        samples: list[DifferenceSample] = []
        for areas in all_areas:
            hook()
            pair = pairs[areas.pair_id]
            selected = select_regions(areas, self.cfg.top_n)
            select_stage.n_in += len(areas.regions)
            select_stage.kept += len(selected)
            select_stage.dropped["over_cap"] += len(areas.regions) - len(selected)

            for region in selected:
                label_stage.n_in += 1
                try:
                    labeled = label_region(pair, region, self.cfg, self.backend(), self.templates)
                except (QuarantineError, BackendError) as e:
                    funnel.quarantine(label_stage, f"{pair.pair_id}:{region.box}", "backend_error", str(e))
                    continue
                if isinstance(labeled, RegionRejection):
                    label_stage.dropped[labeled.kind] += 1
                    rejections.append(
                        {
                            "pair_id": pair.pair_id,
                            "box": labeled.box.to_list(),
                            "reason": labeled.kind,
                            "detail": labeled.detail,
                        }
                    )
                    continue
                label_stage.kept += 1

                caption_stage.n_in += 1
                try:
                    text = difference_caption(pair, labeled, self.cfg, self.backend(), self.templates)
                except (QuarantineError, BackendError) as e:
                    funnel.quarantine(
                        caption_stage, f"{pair.pair_id}:{labeled.box}", "backend_error", str(e)
                    )
                    continue
                samples.append(
                    build_sample(pair, labeled, text, self.cfg, self.templates, images_dir)
                )
                caption_stage.kept += 1

        _write_jsonl(dest / "samples.jsonl", [s.to_dict() for s in samples])
        _write_jsonl(dest / "rejections.jsonl", rejections)
        (dest / "funnel.json").write_text(json.dumps(funnel.to_dict(), sort_keys=True))
        write_quarantines(dest / "quarantine.jsonl", funnel.quarantines)

    def _stage_object_removal(self, dest: Path) -> None:
        pairs = self._load_kept_pairs()
        funnel = Funnel()
        detect_stage = funnel.stage("removal-detect", unit="regions", chain="removal")
        cap_stage = funnel.stage("removal-cap", unit="regions", chain="removal")
        verify_stage = funnel.stage("removal-verify", unit="regions", chain="removal")
        hook = self._hooked(STAGE_OBJECT_REMOVAL)

        images_dir = dest / "images"
        samples: list[DifferenceSample] = []
        for pair in pairs:
            hook()
            counts: dict = {}
            pair_samples = removal_samples_for_pair(
                pair, self.cfg, self.backend(), self.templates, images_dir, counts
            )
            samples.extend(pair_samples)

            segmented = counts.get("segmented", 0)
            detected = counts.get("regions_detected", 0)
            detect_q = counts.get("detect_quarantined", 0)
            capped = counts.get("capped", 0)
            erase_q = counts.get("erase_quarantined", 0)
            rejected = counts.get("verify_rejected", 0)
            accepted = counts.get("accepted", 0)

            detect_stage.n_in += segmented
            detect_stage.kept += detected
            detect_stage.quarantined += detect_q
            detect_stage.dropped["no_object"] += segmented - detected - detect_q
            cap_stage.n_in += detected
            cap_stage.kept += capped
            cap_stage.dropped["over_cap"] += detected - capped
            verify_stage.n_in += capped
            verify_stage.kept += accepted
            verify_stage.quarantined += erase_q
            verify_stage.dropped["verify_rejected"] += rejected
            for reason in counts.get("quarantine_reasons", []):
                funnel.quarantines.append(
                    QuarantineRecord(verify_stage.name, pair.pair_id, "backend_error", reason)
                )

        _write_jsonl(dest / "samples.jsonl", [s.to_dict() for s in samples])
        (dest / "funnel.json").write_text(json.dumps(funnel.to_dict(), sort_keys=True))
        write_quarantines(dest / "quarantine.jsonl", funnel.quarantines)

    def _stage_emit(self, dest: Path) -> None:
        replacement = _read_jsonl(self.stage_dir(STAGE_DIFF_CAPTIONS) / "samples.jsonl")
        removal = _read_jsonl(self.stage_dir(STAGE_OBJECT_REMOVAL) / "samples.jsonl")
        samples = [DifferenceSample.from_dict(d) for d in replacement + removal]

        funnel = Funnel()
        emit_stage = funnel.stage("emit", unit="samples", chain="samples")
        emit_stage.n_in = emit_stage.kept = len(samples)

        dataset = dest / "dataset"
        images = dataset / "images"
        images.mkdir(parents=True)
        for stage in (STAGE_DIFF_CAPTIONS, STAGE_OBJECT_REMOVAL):
            src = self.stage_dir(stage) / "images"
            if src.exists():
                for f in sorted(src.iterdir()):
                    shutil.copyfile(f, images / f.name)
        emit_dataset(samples, dataset)
        (dest / "funnel.json").write_text(json.dumps(funnel.to_dict(), sort_keys=True))

    def _publish_dataset(self) -> None:
        """Expose the emitted dataset at out_dir/dataset."""
        src = self.stage_dir(STAGE_EMIT) / "dataset"
        if self.dataset_dir.exists():
            shutil.rmtree(self.dataset_dir)
        shutil.copytree(src, self.dataset_dir)

    def aggregate_funnel(self) -> Funnel:
        total = Funnel()
        for stage in (
            STAGE_SYNTH_CAPTIONS,
            STAGE_SYNTH_PAIRS,
            STAGE_PREFILTER,
            STAGE_DIFF_AREAS,
            STAGE_DIFF_CAPTIONS,
            STAGE_OBJECT_REMOVAL,
            STAGE_EMIT,
        ):
            path = self.stage_dir(stage) / "funnel.json"
            if path.exists():
                total.merge(Funnel.from_dict(json.loads(path.read_text())))
        return total

    def _stage_stats(self, dest: Path) -> None:
        funnel = self.aggregate_funnel()
        records = read_samples(self.stage_dir(STAGE_EMIT) / "dataset")
        caption_pairs = [
            CaptionPair.from_dict(rec["provenance"]["captions"])
            for rec in records
            if rec.get("kind") == "object_replacement"
        ]
        diversity = diversity_report(caption_pairs, self.vocab)
        write_reports(dest, funnel, diversity)

    # --- driver -------------------------------------------------------------

    _STAGE_FNS = {
        STAGE_SYNTH_CAPTIONS: _stage_synth_captions,
        STAGE_SYNTH_PAIRS: _stage_synth_pairs,
        STAGE_PREFILTER: _stage_prefilter,
        STAGE_DIFF_AREAS: _stage_diff_areas,
        STAGE_DIFF_CAPTIONS: _stage_diff_captions,
        STAGE_OBJECT_REMOVAL: _stage_object_removal,
        STAGE_EMIT: _stage_emit,
        STAGE_STATS: _stage_stats,
    }

    def run(self, stages: Optional[list[str]] = None, resume: bool = False) -> RunState:
        requested = list(stages) if stages else list(STAGE_ORDER)
        unknown = [s for s in requested if s not in STAGE_ORDER]
        if unknown:
            raise RunnerError(f"unknown stages: {unknown}")
        requested.sort(key=STAGE_ORDER.index)

        self.out_dir.mkdir(parents=True, exist_ok=True)
        state_path = self.out_dir / RUN_STATE_NAME
        if resume:
            if not state_path.exists():
                raise RunnerError(f"nothing to resume in {self.out_dir}")
            state = RunState.load(self.out_dir)
            if state.config_digest != self.cfg.digest():
                raise ConfigDigestMismatch(
                    f"run was checkpointed with config digest {state.config_digest}, "
                    f"current config digest is {self.cfg.digest()}"
                )
        else:
            if state_path.exists():
                state = RunState.load(self.out_dir)
                if state.config_digest != self.cfg.digest():
                    raise ConfigDigestMismatch(
                        "output directory holds a run with a different config; "
                        "use a fresh directory"
                    )
            else:
                state = RunState(
                    run_id=self._run_id(), config_digest=self.cfg.digest(), seed=self.cfg.seed
                )
                save_config(self.cfg, self.out_dir / "config.yaml")
                stored_captions = self.out_dir / "captions.jsonl"
                if self.captions_path.resolve() != stored_captions.resolve():
                    shutil.copyfile(self.captions_path, stored_captions)
                state.save(self.out_dir)

        for stage in requested:
            if stage in state.completed:
                continue
            missing = [
                s
                for s in STAGE_ORDER[: STAGE_ORDER.index(stage)]
                if s not in state.completed
            ]
            if missing:
                raise RunnerError(f"stage {stage} requires completed stages {missing}")

            dest = self.stage_dir(stage)
            tmp = self.stages_dir / f"{stage}.tmp"
            if tmp.exists():
                shutil.rmtree(tmp)
            if dest.exists():
                shutil.rmtree(dest)
            tmp.mkdir(parents=True)

            self._STAGE_FNS[stage](self, tmp)

            tmp.replace(dest)
            if stage == STAGE_EMIT:
                self._publish_dataset()
            if stage == STAGE_STATS:
                for name in ("funnel.json", "funnel.txt", "diversity.json"):
                    shutil.copyfile(dest / name, self.out_dir / name)
            state.completed.append(stage)
            state.save(self.out_dir)
        return state

    def refresh(self, stages: list[str]) -> RunState:
        """Re-run already-completed stages (e.g. emit or stats) in place."""
        state = RunState.load(self.out_dir)
        state.completed = [s for s in state.completed if s not in stages]
        state.save(self.out_dir)
        return self.run(stages=stages, resume=True)

    def replay_backend(self) -> Backend:
        """Backend serving only this run's recorded transcript."""
        return ReplayBackend(Transcript(self.out_dir / "transcript.jsonl"))


def open_run(out_dir: str | Path, vocab: Optional[list[str]] = None) -> PipelineRunner:
    """Reconstruct a runner for an existing run directory."""
    from .config import load_config

    out_dir = Path(out_dir)
    cfg = load_config(out_dir / "config.yaml")
    return PipelineRunner(
        out_dir, cfg, captions_path=out_dir / "captions.jsonl", vocab=vocab
    )
