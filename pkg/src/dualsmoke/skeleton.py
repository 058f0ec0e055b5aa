"""Synthetic sketch extraction: diffuse heat inward from a mask's contour,
then thin the mask to the cold medial ridge.

Thinning deletes pixels hottest-first and only when deletion preserves local
topology (8-connected foreground, 4-connected background), so component and
cycle counts survive and the coldest ridge is what remains. Short spurs
(< 3 px) are pruned afterwards.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .fields import GridSpec, MaskField, ScalarField


class EmptyMaskError(ValueError):
    """Skeletonization needs a non-empty mask."""


@dataclass(frozen=True)
class HeatParams:
    iterations: int | None = None  # default 4 * max(nx, ny)
    conductivity: float = 0.25  # explicit 5-point scheme stability limit
    converge_tol: float = 1e-6

    def __post_init__(self):
        if not (0 < self.conductivity <= 0.25):
            raise ValueError("conductivity must lie in (0, 0.25]")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not (self.converge_tol > 0):
            raise ValueError("converge_tol must be positive")


@dataclass
class SketchRaster:
    """One-pixel-wide stroke raster; pixels are a subset of the source mask."""

    spec: GridSpec
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=bool)
        if self.pixels.shape != self.spec.shape:
            raise ValueError("sketch shape must match the grid")


def contour_of(mask: np.ndarray) -> np.ndarray:
    """Mask pixels 4-adjacent to the exterior (image border counts as exterior)."""
    pad = np.pad(mask, 1, constant_values=False)
    ext = ~pad
    touches = (
        ext[:-2, 1:-1] | ext[2:, 1:-1] | ext[1:-1, :-2] | ext[1:-1, 2:]
    )
    return mask & touches


def heat_map(mask: MaskField, params: HeatParams | None = None) -> ScalarField:
    """Temperature field with the mask contour held at 1, the exterior at 0,
    and the interior diffused until converge_tol or the iteration cap.

    Heat enters only through the contour, so temperature falls with depth and
    the medial region stays coldest.
    """
    if params is None:
        params = HeatParams()
    cells = mask.cells
    if not cells.any():
        raise EmptyMaskError("mask has no pixels")
    spec = mask.spec
    contour = contour_of(cells)
    interior = cells & ~contour
    temp = np.where(contour, 1.0, 0.0)
    cap = params.iterations if params.iterations is not None else 4 * max(spec.nx, spec.ny)
    k = params.conductivity
    for _ in range(cap):
        pad = np.pad(temp, 1, mode="constant")
        lap = pad[:-2, 1:-1] + pad[2:, 1:-1] + pad[1:-1, :-2] + pad[1:-1, 2:] - 4.0 * temp
        new = temp + k * lap
        delta = np.abs(new[interior] - temp[interior]).max() if interior.any() else 0.0
        temp[interior] = new[interior]
        if delta < params.converge_tol:
            break
    out = np.where(cells, temp, 0.0)
    return ScalarField(spec, out)


# 3x3 ring positions (dx, dy) and the simple-point lookup table: a pixel is
# deletable without changing topology iff its foreground ring forms one
# 8-connected component and its background ring has one 4-connected component
# touching an edge neighbour.
_RING = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
_EDGE_IDX = [1, 3, 4, 6]


def _build_simple_lut() -> np.ndarray:
    def components(indices, adjacency):
        seen = set()
        count = 0
        for start in indices:
            if start in seen:
                continue
            count += 1
            stack = [start]
            seen.add(start)
            while stack:
                a = stack.pop()
                for b in indices:
                    if b not in seen and adjacency(_RING[a], _RING[b]):
                        seen.add(b)
                        stack.append(b)
        return count

    def adj8(p, q):
        return max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1

    def adj4(p, q):
        return abs(p[0] - q[0]) + abs(p[1] - q[1]) == 1

    lut = np.zeros(256, dtype=bool)
    for bits in range(256):
        fg = [i for i in range(8) if bits >> i & 1]
        bg = [i for i in range(8) if not bits >> i & 1]
        if not fg or not bg:
            continue
        t8 = components(fg, adj8)
        if t8 != 1:
            continue
        bg_seen = set()
        t4 = 0
        for start in bg:
            if start in bg_seen:
                continue
            comp = {start}
            stack = [start]
            while stack:
                a = stack.pop()
                for b in bg:
                    if b not in comp and adj4(_RING[a], _RING[b]):
                        comp.add(b)
                        stack.append(b)
            bg_seen |= comp
            if any(i in _EDGE_IDX for i in comp):
                t4 += 1
        lut[bits] = t4 == 1
    return lut


_SIMPLE_LUT = _build_simple_lut()


def _neighbor_bits(fg: np.ndarray, j: int, i: int) -> tuple[int, int]:
    """(bit pattern, neighbour count) of the 8-ring around (j, i)."""
    rows, cols = fg.shape
    bits = 0
    count = 0
    for idx, (dx, dy) in enumerate(_RING):
        jj, ii = j + dy, i + dx
        if 0 <= jj < rows and 0 <= ii < cols and fg[jj, ii]:
            bits |= 1 << idx
            count += 1
    return bits, count


def _ridge_anchors(mask: np.ndarray, temp: np.ndarray) -> np.ndarray:
    """Ridge of the inverted temperature map by non-maximum suppression
    along the cross-ridge direction.

    The cross-ridge direction at each pixel is the principal direction of
    the temperature Hessian (largest second derivative); comparing only
    along that neighbour pair avoids the false maxima that fixed-direction
    scans pick up where a scan line cuts a curved shape obliquely. One
    comparison may tie so single-pixel-offset plateaus keep one anchor line.
    """
    from scipy.ndimage import map_coordinates

    # derivatives taken on a field where the exterior is as hot as the
    # contour, so the curvature points cross-ridge everywhere inside
    filled = np.where(mask, temp, 1.0)
    pad = np.pad(filled, 1, mode="edge")
    txx = pad[1:-1, 2:] - 2.0 * filled + pad[1:-1, :-2]
    tyy = pad[2:, 1:-1] - 2.0 * filled + pad[:-2, 1:-1]
    txy = 0.25 * (pad[2:, 2:] - pad[2:, :-2] - pad[:-2, 2:] + pad[:-2, :-2])
    # unit direction of the largest eigenvalue of [[txx, txy], [txy, tyy]]
    theta = 0.5 * np.arctan2(2.0 * txy, txx - tyy)
    ux, uy = np.cos(theta), np.sin(theta)

    rows, cols = filled.shape
    jj, ii = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float), indexing="ij")
    ta = map_coordinates(filled, [jj + uy, ii + ux], order=1, mode="nearest")
    tb = map_coordinates(filled, [jj - uy, ii - ux], order=1, mode="nearest")
    # half-strict comparison: exactly-tied plateau pairs keep one anchor line
    anchors = (filled < ta) & (filled <= tb)
    return anchors & mask & ~contour_of(mask)


def _thin_by_heat(mask: np.ndarray, temp: np.ndarray, anchors: np.ndarray | None = None) -> np.ndarray:
    """Delete simple, non-endpoint, non-ridge pixels hottest-first."""
    fg = mask.copy()
    if anchors is None:
        anchors = _ridge_anchors(mask, temp)
    heap = []
    boundary = contour_of(fg)
    for j, i in np.argwhere(boundary & ~anchors):
        heap.append((-temp[j, i], int(j), int(i)))
    heapq.heapify(heap)
    rows, cols = fg.shape

    def beside_anchor(j, i):
        for dx, dy in _RING:
            jj, ii = j + dy, i + dx
            if 0 <= jj < rows and 0 <= ii < cols and anchors[jj, ii] and fg[jj, ii]:
                return True
        return False

    while heap:
        _, j, i = heapq.heappop(heap)
        if not fg[j, i]:
            continue
        bits, count = _neighbor_bits(fg, j, i)
        if not _SIMPLE_LUT[bits]:
            continue
        # endpoints are kept unless they are a redundant stub beside the ridge
        if count < 2 and not beside_anchor(j, i):
            continue
        fg[j, i] = False
        for dx, dy in _RING:
            jj, ii = j + dy, i + dx
            if (
                0 <= jj < fg.shape[0]
                and 0 <= ii < fg.shape[1]
                and fg[jj, ii]
                and not anchors[jj, ii]
            ):
                heapq.heappush(heap, (-temp[jj, ii], jj, ii))
    return fg


def _prune_spurs(fg: np.ndarray, min_len: int = 3) -> np.ndarray:
    """Remove branches shorter than min_len that hang off a junction."""
    out = fg.copy()

    def neighbors(j, i):
        res = []
        for dx, dy in _RING:
            jj, ii = j + dy, i + dx
            if 0 <= jj < out.shape[0] and 0 <= ii < out.shape[1] and out[jj, ii]:
                res.append((jj, ii))
        return res

    endpoints = [tuple(p) for p in np.argwhere(out) if len(neighbors(*p)) == 1]
    for start in endpoints:
        if not out[start]:
            continue
        path = [start]
        prev = None
        cur = start
        junction = None
        while len(path) <= min_len:
            nbrs = [n for n in neighbors(*cur) if n != prev]
            if len(nbrs) != 1:
                break
            nxt = nbrs[0]
            if len(neighbors(*nxt)) >= 3:
                junction = nxt
                break
            prev, cur = cur, nxt
            path.append(cur)
        if junction is not None and len(path) < min_len:
            for p in path:
                out[p] = False
    return out


def _remove_dominated(fg: np.ndarray, temp: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Strip redundant connective pixels: p goes when some neighbour q's
    neighbourhood covers every other neighbour of p (q alone carries p's
    connectivity). Pixels in `keep` (the ridge anchors) are exempt, so only
    junction clutter collapses. Hottest pixels go first; repeats to a fixed
    point."""
    out = fg.copy()
    rows, cols = out.shape

    def neighbors(j, i):
        res = []
        for dx, dy in _RING:
            jj, ii = j + dy, i + dx
            if 0 <= jj < rows and 0 <= ii < cols and out[jj, ii]:
                res.append((jj, ii))
        return res

    changed = True
    while changed:
        changed = False
        order = sorted(
            (tuple(p) for p in np.argwhere(out & ~keep)),
            key=lambda p: (-temp[p[0], p[1]], p[0], p[1]),
        )
        for p in order:
            if not out[p]:
                continue
            nbrs = neighbors(*p)
            if len(nbrs) < 2:
                continue  # endpoints and isolated pixels stay
            for q in nbrs:
                others = [n for n in nbrs if n != q]
                if all(max(abs(n[0] - q[0]), abs(n[1] - q[1])) == 1 for n in others):
                    out[p] = False
                    changed = True
                    break
    return out


def extract_ridge(heat: ScalarField, mask: MaskField) -> SketchRaster:
    """Thin the mask to the cold ridge of its temperature map."""
    anchors = _ridge_anchors(mask.cells, heat.values)
    fg = _thin_by_heat(mask.cells, heat.values, anchors=anchors)
    fg = _remove_dominated(fg, heat.values, keep=anchors & fg)
    fg = _prune_spurs(fg)
    assert not (fg & ~mask.cells).any(), "skeleton escaped the mask"
    return SketchRaster(mask.spec, fg)


def synthetic_sketch(mask: MaskField, params: HeatParams | None = None) -> SketchRaster:
    """Dataset sketch: heat_map then ridge extraction."""
    return extract_ridge(heat_map(mask, params), mask)
