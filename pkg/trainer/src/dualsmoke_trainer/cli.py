"""Trainer command line: train, eval, serve."""

from __future__ import annotations

import json
import sys

import click

from .evaluate import eval_metrics, write_metrics
from .train import TrainConfig, train_stage


@click.group()
def main():
    """Two-stage sketch-to-flow generators."""


@main.command()
@click.argument("stage", type=click.Choice(["lcs", "vf"]))
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch", default=64, show_default=True)
@click.option("--lr", default=2e-4, show_default=True)
@click.option("--l1-weight", default=100.0, show_default=True)
@click.option("--base-channels", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train(stage, manifest, out_path, epochs, batch, lr, l1_weight, base_channels, seed):
    """Train one generator stage on a dataset manifest."""
    config = TrainConfig(
        batch=batch, epochs=epochs, lr=lr, l1_weight=l1_weight,
        base_channels=base_channels, seed=seed,
    )
    try:
        path = train_stage(stage, manifest, config, out_path)
    except Exception as e:
        raise click.ClickException(str(e))
    click.echo(json.dumps({"checkpoint": str(path)}))


@main.command("eval")
@click.option("--lcs", "ckpt_lcs", type=click.Path(exists=True), required=True)
@click.option("--vf", "ckpt_vf", type=click.Path(exists=True), required=True)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--split", default="test", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def evaluate(ckpt_lcs, ckpt_vf, manifest, split, out_path):
    """Two-stage metrics over a manifest split."""
    try:
        metrics = eval_metrics(ckpt_lcs, ckpt_vf, manifest, split)
    except Exception as e:
        raise click.ClickException(str(e))
    if out_path:
        write_metrics(metrics, out_path)
    click.echo(json.dumps(metrics, indent=2))


@main.command()
@click.option("--lcs", "ckpt_lcs", type=click.Path(exists=True), required=True)
@click.option("--vf", "ckpt_vf", type=click.Path(exists=True), required=True)
@click.argument("request_dir", type=click.Path(exists=True, file_okay=False))
def serve(ckpt_lcs, ckpt_vf, request_dir):
    """Answer one guide-provider request directory."""
    from .provider import serve_request

    try:
        serve_request(ckpt_lcs, ckpt_vf, request_dir)
    except Exception as e:
        raise click.ClickException(f"provider error: {e}")


if __name__ == "__main__":
    sys.exit(main())
