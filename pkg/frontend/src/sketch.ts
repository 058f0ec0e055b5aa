import type { SketchDocJson, Stroke, StrokeKind } from "./types.js";

const MIN_SPACING = 2; // px between captured points before decimation keeps one

/** Editable sketch with undo/redo over whole strokes. */
export class SketchModel {
  readonly nx: number;
  readonly ny: number;
  private strokes: Stroke[] = [];
  private redoStack: Stroke[][] = [];
  private undoStack: Stroke[][] = [];
  private pending: Stroke | null = null;
  private lastCanvasPoint: [number, number] | null = null;

  constructor(nx: number, ny: number) {
    this.nx = nx;
    this.ny = ny;
  }

  /** Begin a freehand stroke; canvasPoint is used only for decimation. */
  beginStroke(kind: StrokeKind, gridPoint: [number, number], canvasPoint: [number, number], width = 3): void {
    this.pending = { kind, points: [gridPoint], width };
    this.lastCanvasPoint = canvasPoint;
  }

  /** Append a point if it moved at least MIN_SPACING canvas pixels. */
  extendStroke(gridPoint: [number, number], canvasPoint: [number, number]): boolean {
    if (!this.pending || !this.lastCanvasPoint) return false;
    const dx = canvasPoint[0] - this.lastCanvasPoint[0];
    const dy = canvasPoint[1] - this.lastCanvasPoint[1];
    if (dx * dx + dy * dy < MIN_SPACING * MIN_SPACING) return false;
    this.pending.points.push(gridPoint);
    this.lastCanvasPoint = canvasPoint;
    return true;
  }

  /** Commit the pending stroke; strokes with fewer than 2 points are dropped. */
  endStroke(): Stroke | null {
    const stroke = this.pending;
    this.pending = null;
    this.lastCanvasPoint = null;
    if (!stroke || stroke.points.length < 2) return null;
    this.undoStack.push(this.strokes.slice());
    this.strokes = [...this.strokes, stroke];
    this.redoStack = [];
    return stroke;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) return false;
    this.redoStack.push(this.strokes);
    this.strokes = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (next === undefined) return false;
    this.undoStack.push(this.strokes);
    this.strokes = next;
    return true;
  }

  reset(): void {
    if (this.strokes.length) this.undoStack.push(this.strokes);
    this.strokes = [];
    this.redoStack = [];
  }

  get all(): readonly Stroke[] {
    return this.strokes;
  }

  get inProgress(): Stroke | null {
    return this.pending;
  }

  toJson(): SketchDocJson {
    return {
      canvas: { nx: this.nx, ny: this.ny, dx: 1.0 },
      strokes: this.strokes.map((s) => ({
        kind: s.kind,
        points: s.points.map((p) => [p[0], p[1]]),
        width: s.width,
      })),
    };
  }

  loadJson(doc: SketchDocJson): void {
    this.undoStack.push(this.strokes);
    this.strokes = doc.strokes.map((s) => ({
      kind: s.kind,
      points: s.points.map((p) => [p[0], p[1]] as [number, number]),
      width: s.width ?? 3,
    }));
    this.redoStack = [];
  }
}
