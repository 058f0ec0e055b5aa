"""Grid containers, bilinear sampling, and raster/PNG I/O shared by all modules.

Velocity lives on a staggered (MAC) grid: u on vertical faces, v on
horizontal faces, scalars at cell centers. World coordinates put the domain
at [0, nx*dx] x [0, ny*dx]; arrays are indexed [j, i] (row = y, col = x).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

RASTER_MAGIC = b"DSFLD\x00\x00\x01"
_HEADER = struct.Struct("<IIIf")  # component count, nx, ny, dx


class FieldError(Exception):
    """Base for field container errors."""


class RasterFormatError(FieldError):
    """Raster file is malformed (bad magic, dims, or truncated payload)."""


class FieldValidationError(FieldError):
    """Field contents violate an invariant (shape mismatch, non-finite)."""


@dataclass(frozen=True)
class GridSpec:
    """Cell counts and cell size of a uniform square-cell grid."""

    nx: int
    ny: int
    dx: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise FieldValidationError(f"grid must be at least 4x4, got {self.nx}x{self.ny}")
        if not (self.dx > 0):
            raise FieldValidationError(f"dx must be positive, got {self.dx}")

    @property
    def width(self) -> float:
        return self.nx * self.dx

    @property
    def height(self) -> float:
        return self.ny * self.dx

    @property
    def shape(self) -> tuple[int, int]:
        """(ny, nx) array shape for cell-centered data."""
        return (self.ny, self.nx)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates of cell centers as (xs, ys) meshgrids, shape (ny, nx)."""
        xs = (np.arange(self.nx) + 0.5) * self.dx
        ys = (np.arange(self.ny) + 0.5) * self.dx
        return np.meshgrid(xs, ys)


@dataclass
class ScalarField:
    """Cell-centered samples, shape (ny, nx)."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.spec.shape:
            raise FieldValidationError(
                f"scalar values shape {self.values.shape} != grid shape {self.spec.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise FieldValidationError("scalar field contains non-finite samples")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScalarField":
        return cls(spec, np.zeros(spec.shape))

    def copy(self) -> "ScalarField":
        return ScalarField(self.spec, self.values.copy())


@dataclass
class VelocityField:
    """Staggered velocity: u on vertical faces (ny, nx+1), v on horizontal faces (ny+1, nx).

    Fields rebuilt from cell-center samples keep those samples in
    ``center_cache`` so center-based interchange (rasters, guide protocol)
    round-trips exactly; mutating u/v does not invalidate the cache, so
    treat cached fields as read-only.
    """

    spec: GridSpec
    u: np.ndarray
    v: np.ndarray
    center_cache: tuple[np.ndarray, np.ndarray] | None = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        nx, ny = self.spec.nx, self.spec.ny
        if self.u.shape != (ny, nx + 1) or self.v.shape != (ny + 1, nx):
            raise FieldValidationError(
                f"staggered shapes must be {(ny, nx + 1)} and {(ny + 1, nx)}, "
                f"got {self.u.shape} and {self.v.shape}"
            )
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise FieldValidationError("velocity field contains non-finite samples")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "VelocityField":
        return cls(spec, np.zeros((spec.ny, spec.nx + 1)), np.zeros((spec.ny + 1, spec.nx)))

    def copy(self) -> "VelocityField":
        return VelocityField(self.spec, self.u.copy(), self.v.copy(), self.center_cache)

    def max_speed(self) -> float:
        return float(max(np.abs(self.u).max(), np.abs(self.v).max()))


@dataclass
class MaskField:
    """Boolean cell occupancy, shape (ny, nx)."""

    spec: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.shape != self.spec.shape:
            raise FieldValidationError(
                f"mask shape {self.cells.shape} != grid shape {self.spec.shape}"
            )

    @classmethod
    def empty(cls, spec: GridSpec) -> "MaskField":
        return cls(spec, np.zeros(spec.shape, dtype=bool))

    def copy(self) -> "MaskField":
        return MaskField(self.spec, self.cells.copy())

    def count(self) -> int:
        return int(self.cells.sum())

    def area_fraction(self) -> float:
        return self.cells.mean()


@dataclass(frozen=True)
class Jacobian2x2:
    """Flow-map Jacobian dPhi/dx; columns are derivatives w.r.t. x and y."""

    dxx: float
    dxy: float
    dyx: float
    dyy: float

    def __post_init__(self):
        if not all(np.isfinite(e) for e in (self.dxx, self.dxy, self.dyx, self.dyy)):
            raise FieldValidationError("Jacobian entries must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([[self.dxx, self.dxy], [self.dyx, self.dyy]])


def clamp_to_domain(spec: GridSpec, pos: np.ndarray) -> np.ndarray:
    """Clamp world-space positions (..., 2) into the domain box."""
    pos = np.asarray(pos, dtype=np.float64)
    out = np.empty_like(pos)
    out[..., 0] = np.clip(pos[..., 0], 0.0, spec.width)
    out[..., 1] = np.clip(pos[..., 1], 0.0, spec.height)
    return out


def _bilinear(grid: np.ndarray, gx, gy, convex: bool, with_extrema: bool = False):
    """Bilinear lookup at fractional lattice coordinates (gx = column, gy = row).

    With convex=False the edge cells extrapolate linearly (weights may leave
    [0, 1] by up to half a cell), which keeps sampling exact for affine
    fields right up to the domain boundary. With convex=True weights are
    clamped so the result is a convex combination of stored samples.
    """
    rows, cols = grid.shape
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    i0 = np.clip(np.floor(gx).astype(np.intp), 0, cols - 2)
    j0 = np.clip(np.floor(gy).astype(np.intp), 0, rows - 2)
    fx = gx - i0
    fy = gy - j0
    if convex:
        fx = np.clip(fx, 0.0, 1.0)
        fy = np.clip(fy, 0.0, 1.0)
    flat = np.ascontiguousarray(grid).ravel()
    idx = j0 * cols + i0
    c00 = flat.take(idx, mode="clip")
    c10 = flat.take(idx + 1, mode="clip")
    c01 = flat.take(idx + cols, mode="clip")
    c11 = flat.take(idx + cols + 1, mode="clip")
    value = (c00 * (1 - fx) + c10 * fx) * (1 - fy) + (c01 * (1 - fx) + c11 * fx) * fy
    if not with_extrema:
        return value
    lo = np.minimum(np.minimum(c00, c10), np.minimum(c01, c11))
    hi = np.maximum(np.maximum(c00, c10), np.maximum(c01, c11))
    return value, lo, hi


def sample_scalar(fld: ScalarField, pos: np.ndarray) -> np.ndarray:
    """Bilinear sample of a cell-centered field at world positions (..., 2)."""
    p = clamp_to_domain(fld.spec, pos)
    dx = fld.spec.dx
    return _bilinear(fld.values, p[..., 0] / dx - 0.5, p[..., 1] / dx - 0.5, convex=False)


def sample_staggered(spec: GridSpec, u: np.ndarray, v: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Bilinear sample of raw staggered component arrays at world positions."""
    p = clamp_to_domain(spec, pos)
    dx = spec.dx
    x = p[..., 0]
    y = p[..., 1]
    us = _bilinear(u, x / dx, y / dx - 0.5, convex=False)
    vs = _bilinear(v, x / dx - 0.5, y / dx, convex=False)
    return np.stack([us, vs], axis=-1)


def sample_velocity(fld: VelocityField, pos: np.ndarray) -> np.ndarray:
    """Bilinear sample of each staggered component at world positions (..., 2)."""
    return sample_staggered(fld.spec, fld.u, fld.v, pos)


def velocity_to_centers(fld: VelocityField) -> tuple[np.ndarray, np.ndarray]:
    """Center samples (uc, vc) of shape (ny, nx); faces are averaged unless the
    field carries the exact centers it was built from."""
    if fld.center_cache is not None:
        return fld.center_cache
    uc = 0.5 * (fld.u[:, :-1] + fld.u[:, 1:])
    vc = 0.5 * (fld.v[:-1, :] + fld.v[1:, :])
    return uc, vc


def velocity_from_centers(spec: GridSpec, uc: np.ndarray, vc: np.ndarray) -> VelocityField:
    """Rebuild a staggered field from center samples (interior faces averaged,
    boundary faces copy the nearest cell)."""
    uc = np.asarray(uc, dtype=np.float64)
    vc = np.asarray(vc, dtype=np.float64)
    if uc.shape != spec.shape or vc.shape != spec.shape:
        raise FieldValidationError("center component shapes must match the grid")
    u = np.empty((spec.ny, spec.nx + 1))
    u[:, 1:-1] = 0.5 * (uc[:, :-1] + uc[:, 1:])
    u[:, 0] = uc[:, 0]
    u[:, -1] = uc[:, -1]
    v = np.empty((spec.ny + 1, spec.nx))
    v[1:-1, :] = 0.5 * (vc[:-1, :] + vc[1:, :])
    v[0, :] = vc[0, :]
    v[-1, :] = vc[-1, :]
    return VelocityField(spec, u, v, center_cache=(uc.copy(), vc.copy()))


def write_raster(fld: ScalarField | VelocityField | MaskField, path) -> None:
    """Write a field in the interchange raster format (f32 little-endian).

    Velocity is stored resampled to cell centers (2 components); masks are
    stored as a 0.0/1.0 scalar component.
    """
    if isinstance(fld, VelocityField):
        comps = velocity_to_centers(fld)
    elif isinstance(fld, MaskField):
        comps = (fld.cells.astype(np.float64),)
    else:
        comps = (fld.values,)
    for c in comps:
        if not np.all(np.isfinite(c)):
            raise FieldValidationError("refusing to write non-finite samples")
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC)
        fh.write(_HEADER.pack(len(comps), fld.spec.nx, fld.spec.ny, fld.spec.dx))
        for c in comps:
            fh.write(np.ascontiguousarray(c, dtype="<f4").tobytes())


def read_raster(path) -> ScalarField | VelocityField:
    """Read a raster file; 1 component -> ScalarField, 2 -> VelocityField
    (staggered representation rebuilt from the stored cell-center samples)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(RASTER_MAGIC) + _HEADER.size:
        raise RasterFormatError(f"{path}: truncated header")
    if data[: len(RASTER_MAGIC)] != RASTER_MAGIC:
        raise RasterFormatError(f"{path}: bad magic")
    count, nx, ny, dx = _HEADER.unpack_from(data, len(RASTER_MAGIC))
    if count not in (1, 2):
        raise RasterFormatError(f"{path}: unsupported component count {count}")
    if nx < 4 or ny < 4 or not (dx > 0) or not np.isfinite(dx):
        raise RasterFormatError(f"{path}: invalid dims {nx}x{ny} dx={dx}")
    payload = data[len(RASTER_MAGIC) + _HEADER.size :]
    expected = count * nx * ny * 4
    if len(payload) != expected:
        raise RasterFormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    comps = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, ny, nx)
    if not np.all(np.isfinite(comps)):
        raise RasterFormatError(f"{path}: non-finite samples")
    spec = GridSpec(int(nx), int(ny), float(dx))
    if count == 1:
        return ScalarField(spec, comps[0])
    return velocity_from_centers(spec, comps[0], comps[1])


def write_mask_png(mask: MaskField, path) -> None:
    """8-bit PNG, 255 inside the mask, 0 outside."""
    Image.fromarray(mask.cells.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def read_mask_png(path, spec: GridSpec | None = None) -> MaskField:
    img = Image.open(path).convert("L")
    arr = np.asarray(img) >= 128
    if spec is None:
        spec = GridSpec(img.width, img.height)
    if arr.shape != spec.shape:
        raise FieldValidationError(f"PNG shape {arr.shape} != grid shape {spec.shape}")
    return MaskField(spec, arr)


def write_sketch_png(pixels: np.ndarray, path) -> None:
    """1-bit PNG, black stroke on white background."""
    white = (~np.asarray(pixels, dtype=bool)).astype(np.uint8) * 255
    Image.fromarray(white, mode="L").convert("1", dither=Image.Dither.NONE).save(path, "PNG")


def read_sketch_png(path) -> np.ndarray:
    """Boolean stroke pixels from a black-on-white PNG."""
    img = Image.open(path).convert("L")
    return np.asarray(img) < 128


def write_gray_png(values: np.ndarray, path) -> tuple[float, float]:
    """Min-max normalized 8-bit grayscale PNG; returns the (min, max) scale."""
    values = np.asarray(values, dtype=np.float64)
    lo = float(values.min())
    hi = float(values.max())
    span = hi - lo if hi > lo else 1.0
    img = ((values - lo) / span * 255.0).round().astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")
    return lo, hi
