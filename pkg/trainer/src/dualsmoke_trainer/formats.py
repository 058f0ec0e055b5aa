"""File-level interchange with the simulation toolkit.

The trainer talks to the simulator exclusively through files, so the codecs
here implement the documented schemas directly:

raster (.dsfld): 8-byte magic "DSFLD\\0\\0\\1", then little-endian u32
component count (1 scalar, 2 velocity-at-cell-centers), u32 nx, u32 ny,
f32 dx, then each component row-major (y-major) as f32 little-endian.

masks: 8-bit PNG, foreground >= 128. sketches: black strokes on white.
manifest: JSON lines {id, split, seed, files:{vf,lcs,sketch}, grid, created_at}.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"DSFLD\x00\x00\x01"
_HEADER = struct.Struct("<IIIf")


class FormatError(ValueError):
    pass


def read_raster(path) -> tuple[np.ndarray, float]:
    """Returns (components, dx) with components shaped (count, ny, nx)."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + _HEADER.size or data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a raster file")
    count, nx, ny, dx = _HEADER.unpack_from(data, len(MAGIC))
    payload = data[len(MAGIC) + _HEADER.size :]
    if count not in (1, 2) or len(payload) != count * nx * ny * 4:
        raise FormatError(f"{path}: malformed raster payload")
    comps = np.frombuffer(payload, dtype="<f4").reshape(count, ny, nx).astype(np.float64)
    if not np.all(np.isfinite(comps)):
        raise FormatError(f"{path}: non-finite samples")
    return comps, float(dx)


def write_raster(path, components: np.ndarray, dx: float = 1.0) -> None:
    components = np.asarray(components, dtype=np.float64)
    if components.ndim != 3 or components.shape[0] not in (1, 2):
        raise FormatError("components must be (1|2, ny, nx)")
    if not np.all(np.isfinite(components)):
        raise FormatError("refusing to write non-finite samples")
    count, ny, nx = components.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(count, nx, ny, dx))
        fh.write(np.ascontiguousarray(components, dtype="<f4").tobytes())


def read_mask(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) >= 128


def write_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255, mode="L").save(
        path, format="PNG"
    )


def read_sketch(path) -> np.ndarray:
    """Strokes are dark-on-white."""
    return np.asarray(Image.open(path).convert("L")) < 128


def load_manifest(path) -> list[dict]:
    rows = []
    base = Path(path).parent
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        row["_base"] = str(base)
        rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty manifest")
    return rows


def sample_paths(row: dict) -> dict[str, Path]:
    base = Path(row["_base"])
    return {k: base / rel for k, rel in row["files"].items()}
