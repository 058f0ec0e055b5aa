/** Canvas <-> grid mapping. The grid is letterboxed into the canvas so the
 * aspect ratio is preserved; grid coordinates (world units, y up) are the
 * authoritative representation sent to the service. */

export interface Viewport {
  scale: number;
  offsetX: number;
  offsetY: number;
  canvasW: number;
  canvasH: number;
  nx: number;
  ny: number;
}

export function makeViewport(canvasW: number, canvasH: number, nx: number, ny: number): Viewport {
  const scale = Math.min(canvasW / nx, canvasH / ny);
  return {
    scale,
    offsetX: (canvasW - scale * nx) / 2,
    offsetY: (canvasH - scale * ny) / 2,
    canvasW,
    canvasH,
    nx,
    ny,
  };
}

/** Canvas pixel (y down) to grid point (y up), clamped into the grid. */
export function canvasToGrid(vp: Viewport, px: number, py: number): [number, number] {
  const gx = (px - vp.offsetX) / vp.scale;
  const gy = (vp.canvasH - py - vp.offsetY) / vp.scale;
  return [Math.min(Math.max(gx, 0), vp.nx), Math.min(Math.max(gy, 0), vp.ny)];
}

/** Grid point (y up) back to canvas pixels (y down). */
export function gridToCanvas(vp: Viewport, gx: number, gy: number): [number, number] {
  return [vp.offsetX + gx * vp.scale, vp.canvasH - (vp.offsetY + gy * vp.scale)];
}

/** Letterboxed destination rectangle for the density frame image. */
export function frameRect(vp: Viewport): { x: number; y: number; w: number; h: number } {
  return {
    x: vp.offsetX,
    y: vp.canvasH - vp.offsetY - vp.ny * vp.scale,
    w: vp.nx * vp.scale,
    h: vp.ny * vp.scale,
  };
}
