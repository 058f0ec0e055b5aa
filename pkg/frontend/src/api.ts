import type { FrameResult, SessionStatus, SketchDocJson } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function expectOk(res: Response): Promise<Response> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      detail = ((await res.json()) as { detail?: string }).detail ?? detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(detail, res.status);
  }
  return res;
}

/** Thin typed client over the session endpoints. */
export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(grid?: [number, number]): Promise<string> {
    const res = await expectOk(
      await this.fetchFn(this.url("/sessions"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(grid ? { grid } : {}),
      }),
    );
    return ((await res.json()) as { id: string }).id;
  }

  async putSketch(sid: string, doc: SketchDocJson): Promise<void> {
    await expectOk(
      await this.fetchFn(this.url(`/sessions/${sid}/sketch`), {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(doc),
      }),
    );
  }

  async requestGuide(sid: string, provider = "baseline"): Promise<string> {
    const res = await expectOk(
      await this.fetchFn(this.url(`/sessions/${sid}/guide`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ provider }),
      }),
    );
    return ((await res.json()) as { provenance: string }).provenance;
  }

  async setParams(sid: string, c: number): Promise<void> {
    await expectOk(
      await this.fetchFn(this.url(`/sessions/${sid}/params`), {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ c }),
      }),
    );
  }

  async action(sid: string, action: "start" | "pause" | "reset" | "save"): Promise<unknown> {
    const res = await expectOk(
      await this.fetchFn(this.url(`/sessions/${sid}/${action}`), { method: "POST" }),
    );
    return res.json();
  }

  async status(sid: string): Promise<SessionStatus> {
    const res = await expectOk(await this.fetchFn(this.url(`/sessions/${sid}/status`)));
    return (await res.json()) as SessionStatus;
  }

  /** Long-poll the next frame after `after`; null when nothing new arrived. */
  async nextFrame(sid: string, after: number, wait = 5): Promise<FrameResult | null> {
    const res = await this.fetchFn(
      this.url(`/sessions/${sid}/frame?after=${after}&wait=${wait}`),
    );
    if (res.status === 204) return null;
    await expectOk(res);
    const index = Number(res.headers.get("X-Frame-Index") ?? "-1");
    return {
      index,
      blob: await res.blob(),
      densityMin: Number(res.headers.get("X-Density-Min") ?? "0"),
      densityMax: Number(res.headers.get("X-Density-Max") ?? "1"),
    };
  }

  async listSketches(): Promise<{ id: string; name: string | null }[]> {
    const res = await expectOk(await this.fetchFn(this.url("/sketches")));
    return (await res.json()) as { id: string; name: string | null }[];
  }

  async saveSketch(name: string, doc: SketchDocJson): Promise<string> {
    const res = await expectOk(
      await this.fetchFn(this.url("/sketches"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ name, doc }),
      }),
    );
    return ((await res.json()) as { id: string }).id;
  }

  async loadSketch(id: string): Promise<SketchDocJson> {
    const res = await expectOk(await this.fetchFn(this.url(`/sketches/${id}`)));
    return ((await res.json()) as { doc: SketchDocJson }).doc;
  }
}
