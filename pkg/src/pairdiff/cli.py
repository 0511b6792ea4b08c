"""Command-line interface.

Subcommands: run, sweep, emit, stats, serve-review, serve-backend,
replay, gen-captions. The backend URI comes from --backend or the
PAIRDIFF_BACKEND environment variable (default: the in-process scene
stub). `run` exits 0 only when the funnel report conserves every stage.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backend import BACKEND_ENV_VAR, ReplayBackend, Transcript, resolve_backend
from .backend.scene import make_scene_captions
from .backend.server import create_backend_app
from .config import load_config
from .dataset import load_manifest
from .prompts import load_prompts
from .runner import PipelineRunner, open_run
from .sweep import build_candidate_pool, sweep as run_sweep
from .synthesis import CaptionSource, synthesize_caption_pairs, synthesize_image_pairs
from .util import sha256_file


@click.group()
def main():
    """Contrastive image-difference data synthesis pipeline."""


backend_option = click.option(
    "--backend",
    "backend_uri",
    default=None,
    envvar=BACKEND_ENV_VAR,
    help="Backend URI: stub:scene, stub:scripted:<path>, or http(s)://...",
)
config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None
)
prompts_option = click.option(
    "--prompts", "prompts_path", type=click.Path(exists=True, dir_okay=False), default=None
)


@main.command()
@click.option("--captions", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@config_option
@backend_option
@prompts_option
@click.option("--stages", default=None, help="Comma-separated subset of stages to run.")
@click.option("--resume", is_flag=True, help="Continue a checkpointed run.")
@click.option("--vocab", type=click.Path(exists=True, dir_okay=False), default=None)
def run(captions, out_dir, config_path, backend_uri, prompts_path, stages, resume, vocab):
    """Execute the pipeline (all stages by default)."""
    cfg = load_config(config_path)
    vocab_names = _read_vocab(vocab)
    runner = PipelineRunner(
        out_dir,
        cfg,
        captions_path=captions,
        backend_uri=backend_uri,
        templates=load_prompts(prompts_path),
        vocab=vocab_names,
    )
    stage_list = stages.split(",") if stages else None
    runner.run(stages=stage_list, resume=resume)

    funnel = runner.aggregate_funnel()
    problems = funnel.validate()
    click.echo(funnel.render_table())
    if problems:
        for p in problems:
            click.echo(f"FUNNEL VIOLATION: {p}", err=True)
        sys.exit(1)
    click.echo("funnel conserved; run complete")


@main.command()
@click.option("--captions", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--configs", "config_paths", required=True, help="Comma-separated config files (>= 2).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@backend_option
@prompts_option
def sweep(captions, config_paths, out_path, backend_uri, prompts_path):
    """Compare filter configs over one shared candidate pool."""
    paths = [p for p in config_paths.split(",") if p]
    if len(paths) < 2:
        raise click.UsageError("sweep needs at least two config files")
    configs = [load_config(p) for p in paths]
    backend = resolve_backend(backend_uri)
    templates = load_prompts(prompts_path)

    base = configs[0]
    source = CaptionSource.from_jsonl(captions)
    caption_pairs = synthesize_caption_pairs(
        source, backend, base.seed, templates, max_in_flight=base.max_in_flight
    )
    pairs = synthesize_image_pairs(
        caption_pairs, backend, base.seed, max_in_flight=base.max_in_flight
    )
    pool = build_candidate_pool(pairs, base, backend, templates)
    report = run_sweep(configs, pool, out_path)
    click.echo(json.dumps(report["survivor_counts"]))
    for comp in report["comparisons"]:
        status = "ok" if comp["contained"] else "VIOLATED"
        click.echo(
            f"config {comp['stricter']} ({comp['stricter_count']}) ⊆ "
            f"config {comp['looser']} ({comp['looser_count']}): {status}"
        )


@main.command()
@click.option("--run-dir", required=True, type=click.Path(exists=True, file_okay=False))
def emit(run_dir):
    """Re-emit the dataset from a completed run's checkpoints."""
    runner = open_run(run_dir)
    runner.refresh(["emit"])
    manifest = load_manifest(Path(run_dir) / "dataset")
    click.echo(f"emitted {manifest['count']} samples in {len(manifest['shards'])} shard(s)")


@main.command()
@click.option("--run-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--vocab", type=click.Path(exists=True, dir_okay=False), default=None)
def stats(run_dir, vocab):
    """Recompute funnel and diversity reports for a run."""
    runner = open_run(run_dir, vocab=_read_vocab(vocab))
    runner.refresh(["stats"])
    click.echo((Path(run_dir) / "funnel.txt").read_text())
    click.echo((Path(run_dir) / "diversity.json").read_text())


@main.command("serve-review")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--annotators", required=True, help="Comma-separated annotator ids.")
@click.option("--votes", "votes_path", required=True, type=click.Path(dir_okay=False))
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8700, type=int)
def serve_review(dataset_dir, annotators, votes_path, host, port):
    """Host the annotation review API over a dataset directory."""
    import uvicorn

    from .review import create_review_app

    app = create_review_app(dataset_dir, annotators.split(","), votes_path)
    uvicorn.run(app, host=host, port=port)


@main.command("serve-backend")
@backend_option
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8600, type=int)
@click.option("--max-batch", default=64, type=int)
def serve_backend(backend_uri, host, port, max_batch):
    """Expose a backend (e.g. a stub) over the HTTP wire protocol."""
    import uvicorn

    app = create_backend_app(resolve_backend(backend_uri), max_batch=max_batch)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--run-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def replay(run_dir, out_dir):
    """Re-execute a run from its transcript and verify byte-identical output."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.yaml")
    backend = ReplayBackend(Transcript(run_dir / "transcript.jsonl"))
    runner = PipelineRunner(
        out_dir, cfg, captions_path=run_dir / "captions.jsonl", backend=backend
    )
    runner.run()

    mismatches = _compare_datasets(run_dir / "dataset", Path(out_dir) / "dataset")
    if mismatches:
        for m in mismatches:
            click.echo(f"MISMATCH: {m}", err=True)
        sys.exit(1)
    click.echo("replay byte-identical")


@main.command("gen-captions")
@click.option("-n", "count", default=20, type=int)
@click.option("--seed", default=0, type=int)
@click.option("-o", "out_path", required=True, type=click.Path(dir_okay=False))
def gen_captions(count, seed, out_path):
    """Write a synthetic caption corpus for stub-backed runs."""
    with open(out_path, "w") as f:
        for source_id, caption in make_scene_captions(count, seed):
            f.write(json.dumps({"id": source_id, "caption": caption}) + "\n")
    click.echo(f"wrote {count} captions to {out_path}")


def _read_vocab(path) -> list[str] | None:
    if path is None:
        return None
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


def _compare_datasets(a: Path, b: Path) -> list[str]:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    problems = []
    if files_a != files_b:
        problems.append(f"file sets differ: {set(files_a) ^ set(files_b)}")
    for rel in files_a:
        if (b / rel).exists() and sha256_file(a / rel) != sha256_file(b / rel):
            problems.append(str(rel))
    return problems


if __name__ == "__main__":
    main()
