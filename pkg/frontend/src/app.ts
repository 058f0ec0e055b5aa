import { ApiClient } from "./api.js";
import { SketchModel } from "./sketch.js";
import { canvasToGrid, frameRect, gridToCanvas, makeViewport, Viewport } from "./transform.js";
import type { SessionStatus, StrokeKind } from "./types.js";

export interface AppOptions {
  baseUrl?: string;
  grid?: [number, number];
  fetchFn?: typeof fetch;
  pollWait?: number;
}

/** The live page controller. Rendering is best-effort (headless DOMs have no
 * 2D context); state and network wiring work everywhere. */
export class App {
  readonly api: ApiClient;
  readonly model: SketchModel;
  sessionId: string | null = null;
  lastFrameIndex = -1;
  lastStatus: SessionStatus | null = null;
  offline = false;
  private queuedSketch = false;
  private vp: Viewport;
  private polling = false;
  private frameImage: ImageBitmap | HTMLImageElement | null = null;
  private renderDisabled = false;

  constructor(
    private readonly doc: Document,
    private readonly opts: AppOptions = {},
  ) {
    const [nx, ny] = opts.grid ?? [256, 256];
    this.api = new ApiClient(opts.baseUrl ?? "", opts.fetchFn ?? fetch.bind(globalThis));
    this.model = new SketchModel(nx, ny);
    const canvas = this.canvas;
    this.vp = makeViewport(canvas.width, canvas.height, nx, ny);
  }

  get canvas(): HTMLCanvasElement {
    return this.doc.getElementById("design-canvas") as HTMLCanvasElement;
  }

  private el<T extends HTMLElement>(id: string): T {
    return this.doc.getElementById(id) as T;
  }

  activeKind(): StrokeKind {
    const checked = this.doc.querySelector<HTMLInputElement>("input[name=stroke-kind]:checked");
    return (checked?.value as StrokeKind) ?? "smoke";
  }

  async init(): Promise<void> {
    try {
      this.sessionId = await this.api.createSession(this.opts.grid);
      this.setOffline(false);
    } catch {
      this.setOffline(true);
    }
    this.bindDrawing();
    this.bindControls();
    this.refreshLibrary().catch(() => undefined);
    this.startPolling();
  }

  private setOffline(offline: boolean): void {
    this.offline = offline;
    const banner = this.el<HTMLElement>("offline-banner");
    if (banner) banner.hidden = !offline;
  }

  private canvasPoint(ev: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [ev.clientX - rect.left, ev.clientY - rect.top];
  }

  private bindDrawing(): void {
    const canvas = this.canvas;
    let drawing = false;
    canvas.addEventListener("pointerdown", (ev) => {
      drawing = true;
      const cp = this.canvasPoint(ev as MouseEvent);
      this.model.beginStroke(this.activeKind(), canvasToGrid(this.vp, cp[0], cp[1]), cp);
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (!drawing) return;
      const cp = this.canvasPoint(ev as MouseEvent);
      if (this.model.extendStroke(canvasToGrid(this.vp, cp[0], cp[1]), cp)) {
        this.render();
      }
    });
    const finish = () => {
      if (!drawing) return;
      drawing = false;
      if (this.model.endStroke()) {
        void this.pushSketch();
      }
      this.render();
    };
    canvas.addEventListener("pointerup", finish);
    canvas.addEventListener("pointerleave", finish);
  }

  async pushSketch(): Promise<void> {
    if (!this.sessionId) return;
    try {
      await this.api.putSketch(this.sessionId, this.model.toJson());
      this.setOffline(false);
      this.queuedSketch = false;
    } catch (e) {
      // offline: keep the edit queued locally and retry on the next push
      this.setOffline(true);
      this.queuedSketch = true;
    }
  }

  private bindControls(): void {
    const slider = this.el<HTMLInputElement>("c-slider");
    const label = this.el<HTMLElement>("c-value");
    const sendC = async () => {
      const c = Number(slider.value);
      if (label) label.textContent = c.toFixed(2);
      if (this.sessionId) {
        try {
          await this.api.setParams(this.sessionId, c);
        } catch {
          this.setOffline(true);
        }
      }
    };
    slider.addEventListener("input", () => void sendC());
    slider.addEventListener("change", () => void sendC());

    this.el<HTMLButtonElement>("btn-undo").addEventListener("click", () => {
      if (this.model.undo()) void this.pushSketch();
      this.render();
    });
    this.el<HTMLButtonElement>("btn-redo").addEventListener("click", () => {
      if (this.model.redo()) void this.pushSketch();
      this.render();
    });
    this.el<HTMLButtonElement>("btn-reset").addEventListener("click", () => {
      this.model.reset();
      void this.pushSketch();
      if (this.sessionId) void this.api.action(this.sessionId, "reset");
      this.lastFrameIndex = -1;
      this.frameImage = null;
      this.render();
    });
    this.el<HTMLButtonElement>("btn-start").addEventListener("click", async () => {
      if (!this.sessionId) return;
      try {
        if (this.queuedSketch) await this.pushSketch();
        await this.api.requestGuide(this.sessionId, "baseline");
        await this.api.action(this.sessionId, "start");
      } catch {
        this.setOffline(true);
      }
    });
    this.el<HTMLButtonElement>("btn-pause").addEventListener("click", () => {
      if (this.sessionId) void this.api.action(this.sessionId, "pause");
    });
    this.el<HTMLButtonElement>("btn-save").addEventListener("click", async () => {
      const name = this.el<HTMLInputElement>("sketch-name").value || "untitled";
      try {
        await this.api.saveSketch(name, this.model.toJson());
        await this.refreshLibrary();
      } catch {
        this.setOffline(true);
      }
    });
    this.el<HTMLSelectElement>("sketch-library").addEventListener("change", async (ev) => {
      const id = (ev.target as HTMLSelectElement).value;
      if (!id) return;
      try {
        const doc = await this.api.loadSketch(id);
        this.model.loadJson(doc);
        await this.pushSketch();
        this.render();
      } catch {
        this.setOffline(true);
      }
    });
  }

  async refreshLibrary(): Promise<void> {
    const select = this.el<HTMLSelectElement>("sketch-library");
    const entries = await this.api.listSketches();
    select.innerHTML = "<option value=''>load sketch…</option>";
    for (const e of entries) {
      const opt = this.doc.createElement("option");
      opt.value = e.id;
      opt.textContent = e.name ?? e.id;
      select.appendChild(opt);
    }
  }

  /** One long-poll loop; at most one in-flight frame request. */
  private startPolling(): void {
    if (this.polling) return;
    this.polling = true;
    const loop = async () => {
      while (this.polling) {
        if (!this.sessionId) {
          await new Promise((r) => setTimeout(r, 250));
          continue;
        }
        try {
          const [frame, status] = await Promise.all([
            this.api.nextFrame(this.sessionId, this.lastFrameIndex, this.opts.pollWait ?? 5),
            this.api.status(this.sessionId),
          ]);
          this.lastStatus = status;
          this.updateStatusPanel(status);
          if (frame && frame.index > this.lastFrameIndex) {
            this.lastFrameIndex = frame.index;
            await this.decodeFrame(frame.blob);
            this.render();
          }
          this.setOffline(false);
        } catch {
          this.setOffline(true);
          await new Promise((r) => setTimeout(r, 500));
        }
      }
    };
    void loop();
  }

  stopPolling(): void {
    this.polling = false;
  }

  private async decodeFrame(blob: Blob | null): Promise<void> {
    if (!blob) return;
    try {
      if (typeof createImageBitmap === "function") {
        this.frameImage = await createImageBitmap(blob);
      }
    } catch {
      this.frameImage = null; // headless DOM: no image decoding
    }
  }

  private updateStatusPanel(status: SessionStatus): void {
    const panel = this.el<HTMLElement>("status-panel");
    if (!panel) return;
    panel.textContent =
      `${status.status} · frame ${status.frame} · t=${status.time.toFixed(1)}s · c=${status.c.toFixed(2)}`;
  }

  render(): void {
    if (this.renderDisabled) return;
    const canvas = this.canvas;
    let ctx: CanvasRenderingContext2D | null = null;
    try {
      ctx = canvas.getContext("2d");
    } catch {
      this.renderDisabled = true; // headless DOM: no 2D context
      return;
    }
    if (!ctx) {
      this.renderDisabled = true;
      return;
    }
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (this.frameImage) {
      const r = frameRect(this.vp);
      ctx.drawImage(this.frameImage as CanvasImageSource, r.x, r.y, r.w, r.h);
    }
    const strokes = [...this.model.all];
    const pending = this.model.inProgress;
    if (pending) strokes.push(pending);
    for (const s of strokes) {
      ctx.strokeStyle = s.kind === "smoke" ? "#000000" : "#cc2222";
      ctx.lineWidth = 2;
      ctx.beginPath();
      s.points.forEach(([gx, gy], i) => {
        const [px, py] = gridToCanvas(this.vp, gx, gy);
        if (i === 0) ctx!.moveTo(px, py);
        else ctx!.lineTo(px, py);
      });
      ctx.stroke();
    }
  }
}

export async function wireApp(doc: Document, opts: AppOptions = {}): Promise<App> {
  const app = new App(doc, opts);
  await app.init();
  return app;
}
