"""Command-line entry point. Subcommands map one-to-one onto pipeline steps;
every step is resumable (content-hash staleness) and writes its module's
declared artifacts under the artifact root."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .errors import ForgeError
from .pipeline import Pipeline, PipelineConfig


def _pipeline(config, seed, jobs):
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if jobs is not None:
        overrides["jobs"] = jobs
    return Pipeline(PipelineConfig.load(config, **overrides))


def _run(dry_run: bool, what: str, fn):
    if dry_run:
        click.echo(f"dry-run: would run {what}")
        return
    try:
        result = fn()
    except ForgeError as exc:
        click.echo(f"error: {exc.category}: {exc}", err=True)
        sys.exit(1)
    if result is not None:
        click.echo(str(result))


@click.group()
@click.option("--config", type=click.Path(), default=None, help="YAML config file")
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--dry-run", is_flag=True)
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config, seed, jobs, dry_run, verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    ctx.obj = {"pipeline": _pipeline(config, seed, jobs), "dry_run": dry_run}


@main.command()
@click.pass_obj
def ingest(obj):
    """Probe videos and build transcripts."""
    _run(obj["dry_run"], "ingest", obj["pipeline"].ingest)


@main.group()
def segment():
    """Build the clip or video segment corpus."""


@segment.command("clip")
@click.pass_obj
def segment_clip(obj):
    _run(obj["dry_run"], "segment clip", obj["pipeline"].segment_clip)


@segment.command("video")
@click.pass_obj
def segment_video(obj):
    _run(obj["dry_run"], "segment video", obj["pipeline"].segment_video)


@main.command()
@click.option("--split", type=click.Choice(["train", "test"]), default="train")
@click.pass_obj
def refine(obj, split):
    """Mask humans, crop tissue, and (test split) remove overlay text."""
    _run(obj["dry_run"], f"refine {split}",
         lambda: obj["pipeline"].refine_videos(split))


@main.group(name="gen-instruct")
def gen_instruct():
    """Generate instruction records."""


@gen_instruct.command("clip")
@click.pass_obj
def gen_clip(obj):
    _run(obj["dry_run"], "gen-instruct clip", obj["pipeline"].gen_instruct_clip)


@gen_instruct.command("video")
@click.pass_obj
def gen_video(obj):
    _run(obj["dry_run"], "gen-instruct video", obj["pipeline"].gen_instruct_video)


@main.command()
@click.option("--stage", "stage_id", type=int, required=True)
@click.option("--fraction", type=float, default=1.0,
              help="seeded subsample of the stage 3 corpus")
@click.pass_obj
def assemble(obj, stage_id, fraction):
    """Write the stage dataset manifest."""
    _run(obj["dry_run"], f"assemble stage {stage_id}",
         lambda: obj["pipeline"].assemble(stage_id, fraction))


@main.command()
@click.option("--stage", "stage_id", type=int, required=True)
@click.option("--batch-size", type=int, default=None)
@click.option("--lora-rank", type=int, default=None)
@click.pass_obj
def plan(obj, stage_id, batch_size, lora_rank):
    """Compile and write the stage tuning plan."""
    _run(obj["dry_run"], f"plan stage {stage_id}",
         lambda: obj["pipeline"].plan(stage_id, batch_size, lora_rank))


@main.command("toy-verify")
@click.option("--stage", "stage_id", type=int, required=True)
@click.pass_obj
def toy_verify(obj, stage_id):
    """Run one toy-model step under the stage plan and report block diffs."""
    def go():
        report = obj["pipeline"].toy_verify(stage_id)
        return json.dumps(report.to_dict(), sort_keys=True)
    _run(obj["dry_run"], f"toy-verify stage {stage_id}", go)


@main.command("eval")
@click.option("--model", required=True)
@click.pass_obj
def eval_cmd(obj, model):
    """Judge preds/<model>.jsonl and refresh the leaderboard."""
    _run(obj["dry_run"], f"eval {model}", lambda: obj["pipeline"].eval_model(model))


@main.command("serve-review")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8321)
@click.pass_obj
def serve_review(obj, host, port):
    """Serve the human-in-the-loop boundary review API (loopback)."""
    if obj["dry_run"]:
        click.echo("dry-run: would serve review API")
        return
    import uvicorn

    from .service.app import create_app
    app = create_app(obj["pipeline"].root)
    # the UI's index.html lives in frontend/ and loads ./dist/main.js
    frontend = Path(__file__).resolve().parents[3] / "frontend"
    if (frontend / "index.html").is_file() and (frontend / "dist").is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=frontend, html=True), name="ui")
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
