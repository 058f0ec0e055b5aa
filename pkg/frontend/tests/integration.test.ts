/** End-to-end: a headless DOM drives the real simulation service. A stroke
 * is drawn with pointer events, the run starts, the guiding-scale slider
 * moves mid-run, and the frame index and reported c must follow. */

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { wireApp } from "../src/app.js";
import type { App } from "../src/app.js";

const ROOT = join(dirname(fileURLToPath(import.meta.url)), "..");
const PORT = 18700 + Math.floor(Math.random() * 1000);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

async function waitFor(pred: () => boolean | Promise<boolean>, ms: number, what: string) {
  const deadline = Date.now() + ms;
  while (Date.now() < deadline) {
    if (await pred()) return;
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error(`timed out waiting for ${what}`);
}

beforeAll(async () => {
  service = spawn(
    "python3",
    [
      "-m", "dualsmoke.cli",
      "serve",
      "--port", String(PORT),
      "--grid", "48x48",
      "--data-dir", mkdtempSync(join(tmpdir(), "dualsmoke-ui-test-")),
    ],
    { stdio: "inherit" },
  );
  await waitFor(async () => {
    try {
      const res = await fetch(`${BASE}/healthz`);
      return res.ok;
    } catch {
      return false;
    }
  }, 30_000, "service startup");
}, 40_000);

afterAll(() => {
  service?.kill();
});

function loadMarkup(): void {
  const html = readFileSync(join(ROOT, "index.html"), "utf-8");
  const body = html.match(/<body>([\s\S]*)<\/body>/)![1];
  document.body.innerHTML = body;
}

function pointer(target: EventTarget, type: string, x: number, y: number): void {
  target.dispatchEvent(
    new window.MouseEvent(type, { clientX: x, clientY: y, bubbles: true }),
  );
}

describe("design loop against the live service", () => {
  let app: App;

  it("draws a stroke, starts, and sees frames advance", async () => {
    loadMarkup();
    app = await wireApp(document, { baseUrl: BASE, grid: [48, 48], pollWait: 2 });
    expect(app.sessionId).not.toBeNull();

    // freehand vertical stroke up the middle of the 512px canvas
    const canvas = document.getElementById("design-canvas")!;
    pointer(canvas, "pointerdown", 256, 480);
    for (let y = 470; y >= 40; y -= 16) pointer(canvas, "pointermove", 256 + (y % 3), y);
    pointer(canvas, "pointerup", 256, 40);
    expect(app.model.all.length).toBe(1);
    expect(app.model.all[0].kind).toBe("smoke");
    expect(app.model.all[0].points.length).toBeGreaterThan(10);

    await waitFor(
      async () => (await app.api.status(app.sessionId!)).has_sketch,
      10_000,
      "sketch to land",
    );

    (document.getElementById("btn-start") as HTMLButtonElement).click();
    await waitFor(
      async () => {
        const st = await app.api.status(app.sessionId!);
        return st.status === "running" && st.frame > 3;
      },
      30_000,
      "frames to advance",
    );

    // the poller should have picked frames up too
    await waitFor(() => app.lastFrameIndex > 3, 30_000, "poller to observe frames");
  }, 90_000);

  it("slider changes c mid-run and status reflects it", async () => {
    const slider = document.getElementById("c-slider") as HTMLInputElement;
    slider.value = "2.50";
    slider.dispatchEvent(new window.Event("input", { bubbles: true }));

    await waitFor(
      async () => (await app.api.status(app.sessionId!)).c === 2.5,
      10_000,
      "c to change",
    );
    const before = (await app.api.status(app.sessionId!)).frame;
    await waitFor(
      async () => (await app.api.status(app.sessionId!)).frame > before + 3,
      30_000,
      "frames to keep advancing under the new c",
    );
    const label = document.getElementById("c-value")!;
    expect(label.textContent).toBe("2.50");
  }, 60_000);

  it("undo empties the sketch and save/load round-trips", async () => {
    expect(app.model.undo()).toBe(true);
    expect(app.model.all.length).toBe(0);
    expect(app.model.redo()).toBe(true);
    expect(app.model.all.length).toBe(1);

    (document.getElementById("sketch-name") as HTMLInputElement).value = "loop-test";
    (document.getElementById("btn-save") as HTMLButtonElement).click();
    await waitFor(
      async () => (await app.api.listSketches()).some((s) => s.name === "loop-test"),
      10_000,
      "sketch library save",
    );
    const entry = (await app.api.listSketches()).find((s) => s.name === "loop-test")!;
    const doc = await app.api.loadSketch(entry.id);
    expect(doc.strokes).toEqual(app.model.toJson().strokes);
    app.stopPolling();
  }, 60_000);
});
