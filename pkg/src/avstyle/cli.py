"""Command-line surface: ingest, train, stylize, eval, serve.

Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import cv2
import numpy as np

from . import audio as audio_ops
from .data import ClipManifest, default_fingerprint, ingest_video, split_manifest
from .errors import DataError

RUN_CONFIG_SCHEMA_VERSION = 1
VIDEO_EXTENSIONS = (".avi", ".mp4", ".mov", ".mkv", ".webm")


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, KeyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except DataError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except click.exceptions.Exit:
            raise
        except Exception as exc:
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(4)

    return wrapper


@click.group()
def main():
    """Audio-driven image stylization toolkit."""


@main.command()
@click.option("--videos", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--domain", required=True, help="domain tag for every video in --videos")
@click.option("--clip-seconds", default=3.0, show_default=True)
@click.option("--frames", default=8, show_default=True)
@click.option("--size", default=512, show_default=True)
@click.option("--test-fraction", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--append/--no-append", default=False, help="extend an existing manifest")
@handle_errors
def ingest(videos, out, domain, clip_seconds, frames, size, test_fraction, seed, append):
    """Chop videos into clips and write a split manifest."""
    videos_dir = Path(videos)
    out_dir = Path(out)
    paths = sorted(
        p for p in videos_dir.iterdir() if p.suffix.lower() in VIDEO_EXTENSIONS
    )
    if not paths:
        raise DataError(f"no videos found in {videos_dir}")
    manifest_path = out_dir / "manifest.jsonl"
    records = []
    if append and manifest_path.exists():
        records = ClipManifest.load(manifest_path).records
    for path in paths:
        new = ingest_video(
            path,
            out_dir,
            domain,
            clip_seconds=clip_seconds,
            frames_per_clip=frames,
            frame_size=size,
        )
        click.echo(f"{path.name}: {len(new)} clips")
        records += new
    manifest = ClipManifest(
        records=records,
        fingerprint=default_fingerprint(size, clip_seconds, frames),
    )
    manifest = split_manifest(manifest, test_fraction, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.save(manifest_path)
    n_test = sum(r.split == "test" for r in manifest.records)
    click.echo(
        f"manifest: {len(manifest.records)} clips "
        f"({len(manifest.records) - n_test} train / {n_test} test) -> {manifest_path}"
    )


def load_run_config(path) -> dict:
    with open(path) as f:
        doc = json.load(f)
    version = doc.get("schema_version")
    if version != RUN_CONFIG_SCHEMA_VERSION:
        raise ValueError(f"run config schema version {version} != {RUN_CONFIG_SCHEMA_VERSION}")
    allowed = {"schema_version", "manifest", "out_dir", "train"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown run config keys: {sorted(unknown)}")
    for key in ("manifest", "out_dir", "train"):
        if key not in doc:
            raise ValueError(f"run config missing key {key!r}")
    return doc


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--resume", type=click.Path(exists=True), default=None)
@click.option("--progress/--no-progress", default=True)
@handle_errors
def train(config_path, resume, progress):
    """Run the optimization loop described by a run-config file."""
    from .reporting import render_training_curves
    from .training import TrainConfig, Trainer

    doc = load_run_config(config_path)
    cfg = TrainConfig.from_dict(doc["train"])
    manifest = ClipManifest.load(doc["manifest"])
    out_dir = Path(doc["out_dir"])
    if resume:
        trainer = Trainer.load_checkpoint(resume)
    else:
        trainer = Trainer(cfg)
    latest = trainer.fit(manifest, out_dir, progress=progress)
    fig = render_training_curves(out_dir / "metrics.jsonl", out_dir / "training_curves.png")
    click.echo(f"checkpoint: {latest}")
    click.echo(f"figures: {fig}")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--audio", "audio_path", required=True, type=click.Path(exists=True))
@click.option("--gain", default=1.0, show_default=True)
@click.option("--mix", "mix_path", type=click.Path(exists=True), default=None)
@click.option("--alpha", default=0.5, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@handle_errors
def stylize(ckpt, image_path, audio_path, gain, mix_path, alpha, seed, out_path):
    """Restyle one image under one (optionally mixed, rescaled) sound."""
    from .data import load_frame
    from .inference import ModelSnapshot

    snapshot = ModelSnapshot(ckpt)
    img = load_frame(image_path)
    clip = audio_ops.load_and_standardize(audio_path, snapshot.framing.sample_rate)
    mix_clip = None
    if mix_path:
        mix_clip = audio_ops.load_and_standardize(mix_path, snapshot.framing.sample_rate)
    result = snapshot.stylize(img, clip, gain=gain, mix_clip=mix_clip, alpha=alpha, seed=seed)
    bgr = cv2.cvtColor((result.image * 255).round().astype(np.uint8), cv2.COLOR_RGB2BGR)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(out_path), bgr)
    click.echo(f"stylized -> {out_path} (gain={result.applied_gain}, alpha={result.applied_alpha})")


@main.command(name="eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--providers", default="mock", show_default=True, help="'mock[:dim]' or 'none'")
@click.option("--keywords", default=None, help="JSON mapping of domain tag -> text")
@click.option("--per-domain/--no-per-domain", default=False)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-samples", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@handle_errors
def eval_cmd(ckpt, manifest_path, providers, keywords, per_domain, seed, max_samples, out_path):
    """Score a checkpoint on the manifest's test split."""
    from .metrics import evaluate_run, mock_providers
    from .reporting import render_metric_report

    manifest = ClipManifest.load(manifest_path)
    if providers == "none":
        prov = {}
    elif providers.startswith("mock"):
        dim = int(providers.split(":", 1)[1]) if ":" in providers else 32
        prov = mock_providers(dim)
    else:
        raise ValueError(f"unknown providers spec {providers!r}")
    kw = json.loads(keywords) if keywords else None
    report = evaluate_run(
        ckpt,
        manifest,
        img_provider=prov.get("image"),
        aud_provider=prov.get("audio"),
        txt_provider=prov.get("text") if kw else None,
        keywords=kw,
        seed=seed,
        per_domain=per_domain,
        max_samples=max_samples,
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report.save(out_path)
    fig = render_metric_report(report, out_path.with_suffix(".png"))
    click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    click.echo(f"report: {out_path}\nfigure: {fig}")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--sounds-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@handle_errors
def serve(ckpt, sounds_dir, host, port):
    """Start the studio inference service."""
    import uvicorn

    from .service import create_app

    app = create_app(ckpt, sounds_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
