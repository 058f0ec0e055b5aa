"""Command-line entry points.

Subcommands map one-to-one onto the library: simulate, ftle, lcs, sketch,
dataset, guided-run, verify, serve. `--json` switches the summary output to
machine-readable JSON. Exit codes: 0 success, 1 operational failure,
2 usage error.
"""

from __future__ import annotations

import json as jsonlib
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import DEFAULTS, load_config
from .fields import (
    GridSpec,
    MaskField,
    RasterFormatError,
    ScalarField,
    read_mask_png,
    read_raster,
    write_gray_png,
    write_mask_png,
    write_raster,
    write_sketch_png,
)
from .ftle import FtleParams, VelocitySequence, ftle_field
from .guide import (
    ProviderError,
    SketchDoc,
    SketchError,
    baseline_guide,
    external_guide,
    smoke_sources,
)
from .guided import GuidedParams, guided_step
from .lcs import LcsParams, extract_lcs
from .skeleton import EmptyMaskError, synthetic_sketch
from .solver import SimParams, SimState, step


def _emit(payload: dict, as_json: bool):
    if as_json:
        click.echo(jsonlib.dumps(payload))
    else:
        for k, v in payload.items():
            click.echo(f"{k}: {v}")


def _fail(message: str) -> "click.ClickException":
    exc = click.ClickException(message)
    exc.exit_code = 1
    return exc


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="key=value config file overriding built-in defaults")
@click.pass_context
def main(ctx, config_path):
    """Sketch-guided smoke simulation toolkit."""
    try:
        ctx.obj = load_config(config_path)
    except Exception as e:
        raise _fail(f"bad config: {e}")


def _grid_from(cfg, grid_opt: str | None) -> GridSpec:
    if grid_opt:
        try:
            nx, _, ny = grid_opt.partition("x")
            return GridSpec(int(nx), int(ny or nx))
        except Exception:
            raise click.UsageError(f"bad --grid {grid_opt!r}, expected NXxNY")
    return GridSpec(int(cfg["grid_nx"]), int(cfg["grid_ny"]))


@main.command()
@click.option("--grid", default=None, help="grid size, e.g. 128x128")
@click.option("--frames", default=100, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--save-every", default=0, show_default=True,
              help="write velocity/density rasters every N frames (0 = final only)")
@click.option("--source-x", type=float, default=None, help="plume x position (cells)")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def simulate(cfg, grid, frames, out_dir, save_every, source_x, as_json):
    """Run an unguided smoke simulation with a bottom plume source."""
    spec = _grid_from(cfg, grid)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = SimState.new(spec)
    cx = int(source_x) if source_x is not None else spec.nx // 2
    hw = max(2, spec.nx // 32)
    src = np.zeros(spec.shape, dtype=bool)
    src[1:3, max(0, cx - hw) : min(spec.nx, cx + hw + 1)] = True
    state.sources = MaskField(spec, src)
    params = SimParams(dt=cfg["dt"], alpha=cfg["alpha"])
    for k in range(1, frames + 1):
        step(state, params)
        if save_every and k % save_every == 0:
            write_raster(state.vel, out / f"vel_{k:05d}.dsfld")
            write_raster(state.density, out / f"density_{k:05d}.dsfld")
    write_raster(state.vel, out / "vel_final.dsfld")
    write_raster(state.density, out / "density_final.dsfld")
    _emit({"frames": frames, "time": state.time, "out": str(out)}, as_json)


def _load_sequence(seq_dir: Path, dt_frame: float) -> VelocitySequence:
    files = sorted(seq_dir.glob("*.dsfld"))
    frames = []
    for f in files:
        fld = read_raster(f)
        if isinstance(fld, ScalarField):
            continue
        frames.append(fld)
    if len(frames) < 2:
        raise _fail(f"{seq_dir}: need at least 2 velocity rasters")
    return VelocitySequence(frames, dt_frame=dt_frame)


@main.command()
@click.option("--in", "seq_dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="directory of velocity rasters, lexicographic frame order")
@click.option("--T", "interval", type=float, required=True,
              help="integration interval in seconds; negative traces backward")
@click.option("--t0", type=float, default=None,
              help="start time (default: 0 forward, sequence end backward)")
@click.option("--dt-frame", type=float, default=None, help="frame spacing (default: config dt)")
@click.option("--tau", type=float, default=None, help="finite-difference offset, grid units")
@click.option("--substep", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--png", "png_path", type=click.Path(), default=None,
              help="also write a min-max normalized PNG")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def ftle(cfg, seq_dir, interval, t0, dt_frame, tau, substep, out_path, png_path, as_json):
    """Compute an exponent field from a stored velocity sequence."""
    seq = _load_sequence(Path(seq_dir), dt_frame if dt_frame is not None else cfg["dt"])
    params = FtleParams(
        T=interval,
        tau=tau if tau is not None else cfg["tau"],
        substep_dt=substep,
    )
    if t0 is None:
        t0 = seq.span if interval < 0 else 0.0
    try:
        field = ftle_field(seq, t0, params)
    except Exception as e:
        raise _fail(str(e))
    write_raster(field, out_path)
    payload = {
        "out": str(out_path),
        "frames": len(seq.frames),
        "sigma_min": float(field.values.min()),
        "sigma_max": float(field.values.max()),
    }
    if png_path:
        lo, hi = write_gray_png(field.values[::-1, :], png_path)
        payload["png"] = str(png_path)
    _emit(payload, as_json)


@main.command()
@click.option("--in", "ftle_path", type=click.Path(exists=True), required=True)
@click.option("--out", "png_path", type=click.Path(), required=True, help="mask PNG output")
@click.option("--raster", "raster_path", type=click.Path(), default=None,
              help="also write the mask as a 0/1 raster")
@click.option("--sigma", type=float, default=None, help="pre-filter stddev (cells)")
@click.option("--seed", type=int, default=0)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def lcs(cfg, ftle_path, png_path, raster_path, sigma, seed, as_json):
    """Extract the ridge-region mask from an exponent field."""
    try:
        fld = read_raster(ftle_path)
    except RasterFormatError as e:
        raise _fail(str(e))
    if not isinstance(fld, ScalarField):
        raise _fail(f"{ftle_path}: expected a scalar raster")
    params = LcsParams(
        gaussian_sigma=sigma if sigma is not None else cfg["gaussian_sigma"], seed=seed
    )
    mask = extract_lcs(fld, params)
    write_mask_png(mask, png_path)
    if raster_path:
        write_raster(mask, raster_path)
    _emit({"out": str(png_path), "area_fraction": mask.area_fraction()}, as_json)


@main.command()
@click.option("--in", "mask_path", type=click.Path(exists=True), required=True, help="mask PNG")
@click.option("--out", "out_path", type=click.Path(), required=True, help="sketch PNG output")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def sketch(cfg, mask_path, out_path, as_json):
    """Reduce a region mask to its one-pixel synthetic sketch."""
    mask = read_mask_png(mask_path)
    try:
        raster = synthetic_sketch(mask)
    except EmptyMaskError as e:
        raise _fail(str(e))
    write_sketch_png(raster.pixels, out_path)
    _emit({"out": str(out_path), "stroke_pixels": int(raster.pixels.sum())}, as_json)


@main.command()
@click.option("--train", "n_train", type=int, required=True)
@click.option("--test", "n_test", type=int, required=True)
@click.option("--seed", "base_seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--grid", default=None, help="grid size, e.g. 128x128")
@click.option("--frames", default=None, type=int, help="frames per scenario (default 1000)")
@click.option("--workers", default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def dataset(cfg, n_train, n_test, base_seed, out_dir, grid, frames, workers, as_json):
    """Generate the paired training dataset."""
    from .dataset import ScenarioConfig, build_dataset, load_manifest

    spec = _grid_from(cfg, grid)
    template = ScenarioConfig(
        seed=0,
        grid=spec,
        frames=frames if frames is not None else 1000,
        dt=cfg["dt"],
        alpha=cfg["alpha"],
    )
    try:
        manifest = build_dataset(n_train, n_test, base_seed, out_dir, template, workers=workers)
    except Exception as e:
        raise _fail(str(e))
    _emit({"manifest": str(manifest), "samples": len(load_manifest(manifest))}, as_json)


@main.command("guided-run")
@click.option("--sketch", "sketch_path", type=click.Path(exists=True), required=True,
              help="sketch document JSON")
@click.option("--c", "c_scale", type=float, default=None, help="guiding scale")
@click.option("--frames", default=200, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--provider", default=None, help="external provider command (default: baseline)")
@click.option("--save-every", default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def guided_run(cfg, sketch_path, c_scale, frames, out_dir, provider, save_every, as_json):
    """Run a guided simulation from a sketch, writing density frames."""
    try:
        doc = SketchDoc.from_json(Path(sketch_path).read_text())
    except SketchError as e:
        raise _fail(str(e))
    fallback = False
    try:
        if provider:
            try:
                guide = external_guide(doc, provider)
            except ProviderError as e:
                click.echo(f"provider failed ({e}); falling back to baseline", err=True)
                fallback = True
                guide = baseline_guide(doc)
        else:
            guide = baseline_guide(doc)
    except SketchError as e:
        raise _fail(str(e))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .guide import rasterize_obstacles

    state = SimState.new(doc.canvas)
    state.obstacles = rasterize_obstacles(doc)
    state.sources = smoke_sources(doc)
    params = GuidedParams(
        c=c_scale if c_scale is not None else cfg["c"],
        base=SimParams(dt=cfg["dt"], alpha=cfg["alpha"]),
    )
    for k in range(1, frames + 1):
        guided_step(state, guide, params)
        if save_every and k % save_every == 0:
            write_gray_png(state.density.values[::-1, :], out / f"density_{k:05d}.png")
    _emit(
        {"frames": frames, "out": str(out), "provenance": guide.provenance, "fallback": fallback},
        as_json,
    )


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def verify(cfg, manifest_path, as_json):
    """Check a dataset manifest against its files."""
    from .dataset import verify_dataset

    problems = verify_dataset(manifest_path)
    _emit({"problems": problems, "ok": not problems}, as_json)
    if problems:
        raise _fail(f"{len(problems)} problem(s) found")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True)
@click.option("--data-dir", "data_root", type=click.Path(), default=None,
              help="persistence root (default: $DUALSMOKE_DATA_DIR or ./dualsmoke-data)")
@click.option("--grid", default=None, help="default session grid, e.g. 128x128")
@click.option("--ui-dir", type=click.Path(), default=None,
              help="static UI assets to serve at /")
@click.pass_obj
def serve(cfg, host, port, data_root, grid, ui_dir):
    """Start the HTTP simulation service."""
    import uvicorn

    from .service import create_app

    spec = _grid_from(cfg, grid)
    app = create_app(
        data_root=data_root,
        default_grid=(spec.nx, spec.ny),
        dt=cfg["dt"],
        alpha=cfg["alpha"],
        default_c=cfg["c"],
        ui_dir=ui_dir,
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
