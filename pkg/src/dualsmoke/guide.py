"""Sketch documents and guide-field providers.

A sketch is a set of polyline strokes tagged smoke-control or obstacle. The
built-in baseline provider turns smoke strokes into a guide band: a capsule
region around the strokes carrying stroke-tangent velocity, reoriented
upward. External providers run out of process over a small file protocol:
the request directory receives sketch.png and request.json, the provider
writes lcs.png and vf.dsfld back and exits 0.
"""

from __future__ import annotations

import json
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .fields import (
    FieldValidationError,
    GridSpec,
    MaskField,
    ScalarField,
    VelocityField,
    read_mask_png,
    read_raster,
    write_sketch_png,
)

STROKE_KINDS = ("smoke", "obstacle")


class SketchError(ValueError):
    """Sketch document violates its invariants."""


class ProviderError(RuntimeError):
    """External guide provider failed; diagnostics attached."""

    def __init__(self, message, *, stdout: str = "", stderr: str = "", workdir: str | None = None):
        super().__init__(message)
        self.stdout = stdout
        self.stderr = stderr
        self.workdir = workdir


@dataclass
class Stroke:
    kind: str
    points: np.ndarray  # (n, 2) world-space polyline
    width: float = 3.0

    def __post_init__(self):
        if self.kind not in STROKE_KINDS:
            raise SketchError(f"unknown stroke kind {self.kind!r}")
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 2:
            raise SketchError("a stroke needs at least 2 points of shape (n, 2)")
        if not np.all(np.isfinite(self.points)):
            raise SketchError("stroke points must be finite")
        if not (self.width > 0):
            raise SketchError("stroke width must be positive")


@dataclass
class SketchDoc:
    canvas: GridSpec
    strokes: list[Stroke] = dc_field(default_factory=list)

    def __post_init__(self):
        # points are clamped into the canvas, matching the capture contract
        w, h = self.canvas.width, self.canvas.height
        for s in self.strokes:
            s.points[:, 0] = np.clip(s.points[:, 0], 0.0, w)
            s.points[:, 1] = np.clip(s.points[:, 1], 0.0, h)

    def smoke_strokes(self) -> list[Stroke]:
        return [s for s in self.strokes if s.kind == "smoke"]

    def obstacle_strokes(self) -> list[Stroke]:
        return [s for s in self.strokes if s.kind == "obstacle"]

    def to_json(self) -> str:
        return json.dumps(
            {
                "canvas": {"nx": self.canvas.nx, "ny": self.canvas.ny, "dx": self.canvas.dx},
                "strokes": [
                    {"kind": s.kind, "points": s.points.tolist(), "width": s.width}
                    for s in self.strokes
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SketchDoc":
        try:
            data = json.loads(text)
            canvas = GridSpec(
                int(data["canvas"]["nx"]),
                int(data["canvas"]["ny"]),
                float(data["canvas"].get("dx", 1.0)),
            )
            strokes = [
                Stroke(s["kind"], np.asarray(s["points"], dtype=float), float(s.get("width", 3.0)))
                for s in data["strokes"]
            ]
        except (KeyError, TypeError, ValueError, FieldValidationError) as e:
            raise SketchError(f"malformed sketch document: {e}") from e
        return cls(canvas, strokes)


@dataclass
class GuideFields:
    """Guide velocity plus the region it applies in."""

    u_g: VelocityField
    omega: MaskField
    provenance: str = "baseline"

    def __post_init__(self):
        if self.u_g.spec != self.omega.spec:
            raise FieldValidationError("guide velocity and region grids differ")


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point (..., 2) to segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(points - proj, axis=-1)


def _stamp_capsules(spec: GridSpec, strokes: list[Stroke], radius: float | None = None) -> np.ndarray:
    """Cells whose centers lie within each stroke's capsule (width/2 or a
    fixed radius, in world units)."""
    xs, ys = spec.cell_centers()
    pts = np.stack([xs, ys], axis=-1)
    out = np.zeros(spec.shape, dtype=bool)
    for s in strokes:
        r = radius if radius is not None else 0.5 * s.width * spec.dx
        for a, b in zip(s.points[:-1], s.points[1:]):
            out |= _segment_distances(pts, a, b) <= r
    return out


def rasterize_obstacles(doc: SketchDoc) -> MaskField:
    """Obstacle strokes stamped as filled capsules of the stroke width."""
    return MaskField(doc.canvas, _stamp_capsules(doc.canvas, doc.obstacle_strokes()))


def smoke_sources(doc: SketchDoc, radius: float = 2.0) -> MaskField:
    """Emitter cells: a disk around each smoke stroke's lowest point, where
    the designed flow enters the domain."""
    spec = doc.canvas
    xs, ys = spec.cell_centers()
    cells = np.zeros(spec.shape, dtype=bool)
    for s in doc.smoke_strokes():
        low = s.points[np.argmin(s.points[:, 1])]
        cells |= (xs - low[0]) ** 2 + (ys - low[1]) ** 2 <= (radius * spec.dx) ** 2
    return MaskField(spec, cells)


def rasterize_sketch(doc: SketchDoc) -> np.ndarray:
    """Smoke strokes as a boolean stroke raster (the provider-facing image)."""
    return _stamp_capsules(doc.canvas, doc.smoke_strokes())


def _resample_stroke(stroke: Stroke, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Dense samples along a polyline with per-sample unit tangents (vertex
    tangents average the adjacent segments)."""
    pts = stroke.points
    segs = np.diff(pts, axis=0)
    lengths = np.linalg.norm(segs, axis=1)
    keep = lengths > 1e-12
    if not keep.any():
        raise SketchError("stroke is degenerate (zero length)")
    samples = []
    tangents = []
    seg_dirs = segs[keep] / lengths[keep][:, None]
    starts = pts[:-1][keep]
    for k, (a, d, ln) in enumerate(zip(starts, seg_dirs, lengths[keep])):
        n = max(2, int(np.ceil(ln / spacing)) + 1)
        ts = np.linspace(0.0, ln, n)
        samples.append(a + ts[:, None] * d)
        t = np.tile(d, (n, 1))
        # blend tangents at shared vertices
        if k > 0:
            t[0] = seg_dirs[k - 1] + d
        if k < len(seg_dirs) - 1:
            t[-1] = d + seg_dirs[k + 1]
        tangents.append(t)
    samples = np.concatenate(samples)
    tangents = np.concatenate(tangents)
    norms = np.linalg.norm(tangents, axis=1)
    norms[norms == 0] = 1.0
    return samples, tangents / norms[:, None]


def baseline_guide(
    doc: SketchDoc,
    band_radius: float = 4.0,
    speed: float = 1.0,
) -> GuideFields:
    """Procedural guide: a band of radius band_radius cells around the smoke
    strokes carrying tangent-aligned velocity.

    Tangents are reoriented so their vertical component is non-negative
    (designs flow upward); the magnitude is `speed` on the stroke, falling
    linearly to half at the band edge.
    """
    smoke = doc.smoke_strokes()
    if not smoke:
        raise SketchError("baseline guide needs at least one smoke stroke")
    spec = doc.canvas
    r = band_radius * spec.dx
    samples = []
    tangents = []
    for s in smoke:
        pts, tans = _resample_stroke(s, spacing=0.25 * spec.dx)
        samples.append(pts)
        tangents.append(tans)
    samples = np.concatenate(samples)
    tangents = np.concatenate(tangents)
    flip = tangents[:, 1] < 0.0
    tangents[flip] *= -1.0
    tree = cKDTree(samples)

    def eval_at(pos):
        d, idx = tree.query(pos.reshape(-1, 2))
        d = d.reshape(pos.shape[:-1])
        idx = idx.reshape(pos.shape[:-1])
        inside = d <= r
        mag = np.where(inside, speed * (1.0 - 0.5 * d / r), 0.0)
        vec = tangents[idx] * mag[..., None]
        vec[~inside] = 0.0
        return vec, inside

    dx = spec.dx
    ux, uy = np.meshgrid(np.arange(spec.nx + 1) * dx, (np.arange(spec.ny) + 0.5) * dx)
    vx, vy = np.meshgrid((np.arange(spec.nx) + 0.5) * dx, np.arange(spec.ny + 1) * dx)
    cxs, cys = spec.cell_centers()
    u_vec, _ = eval_at(np.stack([ux, uy], axis=-1))
    v_vec, _ = eval_at(np.stack([vx, vy], axis=-1))
    _, omega = eval_at(np.stack([cxs, cys], axis=-1))
    u_g = VelocityField(spec, u_vec[..., 0], v_vec[..., 1])
    return GuideFields(u_g, MaskField(spec, omega), provenance="baseline")


def write_provider_request(doc: SketchDoc, workdir: Path) -> None:
    spec = doc.canvas
    write_sketch_png(rasterize_sketch(doc), workdir / "sketch.png")
    (workdir / "request.json").write_text(
        json.dumps({"grid": [spec.nx, spec.ny], "sketch": "sketch.png", "want": ["lcs", "vf"]})
    )


def external_guide(doc: SketchDoc, provider: str, timeout: float = 10.0) -> GuideFields:
    """Run an external provider command over the file protocol.

    The command gets the request directory as its last argument and must
    write lcs.png (1-bit) and vf.dsfld (2-component raster) there. On
    failure the directory is preserved and referenced by the raised
    ProviderError for debugging.
    """
    spec = doc.canvas
    workdir = Path(tempfile.mkdtemp(prefix="dualsmoke-guide-"))
    write_provider_request(doc, workdir)
    argv = shlex.split(provider) + [str(workdir)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as e:
        raise ProviderError(
            f"provider timed out after {timeout}s (workdir kept at {workdir})",
            stdout=e.stdout or "",
            stderr=e.stderr or "",
            workdir=str(workdir),
        ) from e
    except OSError as e:
        raise ProviderError(f"provider could not be launched: {e}", workdir=str(workdir)) from e

    def fail(msg):
        raise ProviderError(
            f"{msg} (workdir kept at {workdir})",
            stdout=proc.stdout,
            stderr=proc.stderr,
            workdir=str(workdir),
        )

    if proc.returncode != 0:
        fail(f"provider exited with status {proc.returncode}")
    lcs_path = workdir / "lcs.png"
    vf_path = workdir / "vf.dsfld"
    if not lcs_path.exists() or not vf_path.exists():
        fail("provider did not produce lcs.png and vf.dsfld")
    try:
        omega = read_mask_png(lcs_path, spec)
        vf = read_raster(vf_path)
    except Exception as e:  # malformed outputs -> provider error with context
        fail(f"provider outputs unreadable: {e}")
    if isinstance(vf, ScalarField) or vf.spec.shape != spec.shape:
        fail(f"provider velocity has wrong layout (expected 2-component {spec.shape})")
    if doc.smoke_strokes() and not omega.cells.any():
        fail("provider returned an empty region for a sketch with smoke strokes")
    shutil.rmtree(workdir, ignore_errors=True)
    name = Path(shlex.split(provider)[0]).name
    return GuideFields(VelocityField(spec, vf.u, vf.v, vf.center_cache), omega, f"external:{name}")
