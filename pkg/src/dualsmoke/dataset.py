"""Paired-sample dataset generation: randomized buoyant-plume scenarios,
backward exponent fields over the final frames, ridge-region masks, and
synthetic sketches, recorded in a JSON-lines manifest.

Randomness is pinned to numpy's PCG64 (default_rng) seeded per sample, so a
given seed reproduces files bit-for-bit on one platform. Seed schedules for
the train and test splits are disjoint by construction.
"""

from __future__ import annotations

import json
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .fields import GridSpec, MaskField, read_mask_png, read_raster, read_sketch_png, write_mask_png, write_raster
from .ftle import FtleParams, VelocitySequence, backward_ftle
from .lcs import LcsParams, extract_lcs
from .skeleton import HeatParams, synthetic_sketch
from .solver import SimParams, SimState, step
from .fields import ScalarField, write_sketch_png

TEST_SEED_OFFSET = 1_000_000
LCS_AREA_BOUNDS = (0.005, 0.40)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    grid: GridSpec = field(default_factory=lambda: GridSpec(256, 256))
    frames: int = 1000
    dt: float = 0.1
    alpha: float = 0.025
    source_rate: float = 1.0
    source_row: int = 1  # bottom band: rows [source_row, source_row + source_rows)
    source_rows: int = 2
    source_halfwidth: int | None = None  # default nx // 32
    square_frac: float = 0.25  # center square side as a fraction of min(nx, ny)
    square_speed: float = 1.0
    square_persistent: bool = False  # re-impose the square every frame
    backward_frames: int = 25  # integration window, frames (T = 2.5 s at dt 0.1)

    def __post_init__(self):
        if self.frames < self.backward_frames:
            raise ValueError("scenario must run at least the backward window")
        if not (0 < self.square_frac < 1):
            raise ValueError("square_frac must keep the square inside the domain")

    @property
    def halfwidth(self) -> int:
        return self.source_halfwidth if self.source_halfwidth is not None else max(2, self.grid.nx // 32)


@dataclass
class DatasetSample:
    id: str
    split: str
    seed: int
    files: dict[str, str]
    grid: tuple[int, int]
    created_at: str

    def row(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "seed": self.seed,
            "files": self.files,
            "grid": list(self.grid),
            "created_at": self.created_at,
        }


class SampleRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _apply_center_square(state: SimState, config: ScenarioConfig, direction: np.ndarray) -> None:
    spec = config.grid
    side = max(2, round(config.square_frac * min(spec.nx, spec.ny)))
    x0 = (spec.nx - side) // 2
    y0 = (spec.ny - side) // 2
    ux, vy = config.square_speed * direction
    state.vel.u[y0 : y0 + side, x0 : x0 + side + 1] = ux
    state.vel.v[y0 : y0 + side + 1, x0 : x0 + side] = vy


def run_scenario(config: ScenarioConfig) -> tuple[VelocitySequence, SimState]:
    """Simulate the scenario; returns the trailing velocity window (the last
    backward_frames + 1 frames) and the final state.

    The scenario seeds a plume source at a random x position on the fixed
    bottom band and a randomly oriented unit-speed square in the domain
    center (initial condition by default).
    """
    rng = np.random.default_rng(config.seed)
    spec = config.grid
    hw = config.halfwidth
    cx = int(rng.integers(hw + 1, spec.nx - hw - 1))
    theta = float(rng.uniform(0.0, 2.0 * math.pi))
    direction = np.array([math.cos(theta), math.sin(theta)])

    state = SimState.new(spec)
    src = np.zeros(spec.shape, dtype=bool)
    src[config.source_row : config.source_row + config.source_rows, cx - hw : cx + hw + 1] = True
    state.sources = MaskField(spec, src)
    _apply_center_square(state, config, direction)

    params = SimParams(dt=config.dt, alpha=config.alpha, source_rate=config.source_rate)
    window: deque = deque(maxlen=config.backward_frames + 1)
    window.append(state.vel.copy())
    for _ in range(config.frames):
        if config.square_persistent:
            _apply_center_square(state, config, direction)
        step(state, params)
        window.append(state.vel.copy())
    seq = VelocitySequence(list(window), dt_frame=config.dt)
    return seq, state


def build_sample(
    config: ScenarioConfig,
    out_dir: Path,
    split: str = "train",
    lcs_params: LcsParams | None = None,
    heat_params: HeatParams | None = None,
) -> DatasetSample:
    """Run one scenario end to end and write its three files.

    Raises SampleRejected when the extracted region is empty or its area
    falls outside the sanity band; solver errors propagate with the seed
    attached.
    """
    out_dir = Path(out_dir)
    (out_dir / "samples").mkdir(parents=True, exist_ok=True)
    try:
        seq, state = run_scenario(config)
    except Exception as e:
        raise RuntimeError(f"scenario seed={config.seed} failed: {e}") from e

    T = config.backward_frames * config.dt
    ftle = backward_ftle(seq, FtleParams(T=T))
    if lcs_params is None:
        lcs_params = LcsParams(seed=config.seed)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mask = extract_lcs(ftle, lcs_params)
    if mask.count() == 0:
        raise SampleRejected("empty-lcs")
    frac = mask.area_fraction()
    if not (LCS_AREA_BOUNDS[0] <= frac <= LCS_AREA_BOUNDS[1]):
        raise SampleRejected(f"lcs-area:{frac:.4f}")
    sketch = synthetic_sketch(mask, heat_params)
    if not sketch.pixels.any():
        raise SampleRejected("empty-sketch")

    sid = f"{split}-{config.seed:08d}"
    files = {
        "vf": f"samples/{sid}_vf.dsfld",
        "lcs": f"samples/{sid}_lcs.png",
        "sketch": f"samples/{sid}_sketch.png",
    }
    write_raster(state.vel, out_dir / files["vf"])
    write_mask_png(mask, out_dir / files["lcs"])
    write_sketch_png(sketch.pixels, out_dir / files["sketch"])
    return DatasetSample(
        id=sid,
        split=split,
        seed=config.seed,
        files=files,
        grid=(config.grid.nx, config.grid.ny),
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def _build_one(args):
    config, out_dir, split = args
    try:
        return ("ok", build_sample(config, Path(out_dir), split).row())
    except SampleRejected as e:
        return ("rejected", {"split": split, "seed": config.seed, "reason": e.reason})


def _split_seed(base_seed: int, split: str, attempt: int) -> int:
    return base_seed + attempt + (TEST_SEED_OFFSET if split == "test" else 0)


def build_dataset(
    n_train: int,
    n_test: int,
    base_seed: int,
    out_dir,
    template: ScenarioConfig | None = None,
    workers: int = 1,
) -> Path:
    """Build the requested number of accepted samples per split.

    The attempt schedule is deterministic in base_seed; rejected seeds are
    recorded in rejects.jsonl and skipped on resume, so an interrupted run
    continues to an identical manifest (ids, seeds, files).
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("need at least one sample per split")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    rejects_path = out_dir / "rejects.jsonl"
    if template is None:
        template = ScenarioConfig(seed=0)

    have: dict[str, dict] = {}
    if manifest_path.exists():
        for line in manifest_path.read_text().splitlines():
            if line.strip():
                row = json.loads(line)
                have[row["id"]] = row
    rejected: set[int] = set()
    if rejects_path.exists():
        for line in rejects_path.read_text().splitlines():
            if line.strip():
                rejected.add(json.loads(line)["seed"])

    def run_batch(jobs):
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_build_one, jobs))
        return [_build_one(j) for j in jobs]

    with open(manifest_path, "a") as mani, open(rejects_path, "a") as rej:
        for split, count in (("train", n_train), ("test", n_test)):
            accepted = 0
            attempt = 0
            while accepted < count:
                # gather the next schedule prefix with enough unbuilt seeds
                batch: list[int] = []
                probe = attempt
                while len(batch) < count - accepted:
                    if probe - attempt > TEST_SEED_OFFSET // 2:
                        raise RuntimeError("seed schedule exhausted")
                    seed = _split_seed(base_seed, split, probe)
                    probe += 1
                    sid = f"{split}-{seed:08d}"
                    if seed in rejected or sid in have:
                        continue
                    batch.append(seed)
                jobs = [(replace(template, seed=s), str(out_dir), split) for s in batch]
                results = dict(zip(batch, run_batch(jobs)))
                # commit in schedule order; rejections trigger another round
                while accepted < count and attempt < probe:
                    seed = _split_seed(base_seed, split, attempt)
                    attempt += 1
                    sid = f"{split}-{seed:08d}"
                    if sid in have:
                        accepted += 1
                        continue
                    if seed in rejected:
                        continue
                    status, payload = results[seed]
                    if status == "ok":
                        have[sid] = payload
                        mani.write(json.dumps(payload) + "\n")
                        mani.flush()
                        accepted += 1
                    else:
                        rejected.add(seed)
                        rej.write(json.dumps(payload) + "\n")
                        rej.flush()
    return manifest_path


def load_manifest(manifest_path) -> list[dict]:
    rows = []
    for line in Path(manifest_path).read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def verify_dataset(manifest_path) -> list[str]:
    """Check manifest/file consistency; returns a list of problems (empty
    when the dataset is intact)."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    problems: list[str] = []
    rows = load_manifest(manifest_path)
    seen: set[str] = set()
    for row in rows:
        sid = row.get("id", "<missing id>")
        if sid in seen:
            problems.append(f"{sid}: duplicate id")
            continue
        seen.add(sid)
        try:
            nx, ny = row["grid"]
            spec = GridSpec(nx, ny)
        except Exception as e:
            problems.append(f"{sid}: bad grid: {e}")
            continue
        try:
            vf = read_raster(base / row["files"]["vf"])
            if isinstance(vf, ScalarField) or vf.spec.shape != spec.shape:
                problems.append(f"{sid}: velocity raster layout mismatch")
                continue
            lcs = read_mask_png(base / row["files"]["lcs"], spec)
            sketch = read_sketch_png(base / row["files"]["sketch"])
        except Exception as e:
            problems.append(f"{sid}: unreadable files: {e}")
            continue
        if sketch.shape != spec.shape:
            problems.append(f"{sid}: sketch dims mismatch")
            continue
        if (sketch & ~lcs.cells).any():
            problems.append(f"{sid}: sketch leaves the region mask")
        frac = lcs.area_fraction()
        if not (LCS_AREA_BOUNDS[0] <= frac <= LCS_AREA_BOUNDS[1]):
            problems.append(f"{sid}: region area {frac:.4f} outside bounds")
    return problems
