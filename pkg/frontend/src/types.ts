export type StrokeKind = "smoke" | "obstacle";

export interface Stroke {
  kind: StrokeKind;
  points: [number, number][]; // grid coordinates, y up
  width: number;
}

export interface SketchDocJson {
  canvas: { nx: number; ny: number; dx: number };
  strokes: { kind: StrokeKind; points: number[][]; width: number }[];
}

export interface SessionStatus {
  id: string;
  status: "idle" | "running" | "error";
  error: string | null;
  frame: number;
  time: number;
  c: number;
  grid: [number, number];
  has_sketch: boolean;
  has_guide: boolean;
  provenance: string | null;
}

export interface FrameResult {
  index: number;
  blob: Blob | null;
  densityMin: number;
  densityMax: number;
}
