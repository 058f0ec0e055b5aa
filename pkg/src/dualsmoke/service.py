"""HTTP simulation service: sessions own a stepping worker thread; clients
push sketches, request guides, tune the guiding scale mid-run, and pull
density frames (long-poll on the frame index).

Each session is isolated: one worker, one state, commands message-passed
between steps. Density frames are served as min-max normalized 8-bit PNG
with the physical scale in X-Density-Min/Max headers. Run records and the
sketch library persist as flat JSON under the data directory.
"""

from __future__ import annotations

import io
import json
import queue
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .config import data_dir as resolve_data_dir
from .fields import GridSpec, MaskField, ScalarField
from .guide import (
    GuideFields,
    ProviderError,
    SketchDoc,
    SketchError,
    baseline_guide,
    external_guide,
    rasterize_obstacles,
    smoke_sources,
)
from .guided import GuidedParams, guided_step
from .solver import SimParams, SimState

# One solver step runs at a time across sessions: the tiny per-op numpy
# kernels otherwise thrash the GIL between worker threads and aggregate
# throughput collapses. States stay per-session; this only schedules CPU.
_STEP_LOCK = threading.Lock()


@dataclass
class FrameSlot:
    index: int = 0
    time: float = 0.0
    density: np.ndarray | None = None


class Session:
    def __init__(self, sid: str, spec: GridSpec, c: float, dt: float, alpha: float):
        self.id = sid
        self.spec = spec
        self.sketch: SketchDoc | None = None
        self.guide: GuideFields | None = None
        self.params = GuidedParams(c=c, base=SimParams(dt=dt, alpha=alpha))
        self.state = SimState.new(spec)
        self.status = "idle"
        self.error: str | None = None
        self.created_at = datetime.now(timezone.utc).isoformat()
        self.commands: queue.Queue = queue.Queue()
        self.frame_cond = threading.Condition()
        self.frame = FrameSlot(density=np.zeros(spec.shape))
        self._png_cache: tuple[int, bytes, float, float] | None = None
        self._stop = False
        self.worker = threading.Thread(target=self._run, name=f"session-{sid}", daemon=True)
        self.worker.start()

    # ---- worker side ----

    def _publish(self):
        with self.frame_cond:
            self.frame = FrameSlot(
                index=self.state.frame,
                time=self.state.time,
                density=self.state.density.values.copy(),
            )
            self.frame_cond.notify_all()

    def _apply(self, cmd, payload):
        if cmd == "sketch":
            # self.sketch was already assigned on the request thread
            self.state.obstacles = rasterize_obstacles(payload)
            self.state.sources = smoke_sources(payload)
        elif cmd == "guide":
            self.guide = payload
        elif cmd == "params":
            self.params = GuidedParams(c=payload, base=self.params.base)
        elif cmd == "start":
            if self.status != "error":
                self.status = "running"
        elif cmd == "pause":
            if self.status == "running":
                self.status = "idle"
        elif cmd == "reset":
            obstacles, sources = self.state.obstacles, self.state.sources
            self.state = SimState.new(self.spec)
            self.state.obstacles = obstacles
            self.state.sources = sources
            self.status = "idle"
            self.error = None
            self._publish()
        elif cmd == "stop":
            self._stop = True

    def _run(self):
        while not self._stop:
            try:
                block = self.status != "running"
                cmd, payload = self.commands.get(block=block, timeout=0.2 if block else None)
                self._apply(cmd, payload)
                continue
            except queue.Empty:
                pass
            if self.status != "running" or self._stop:
                continue
            try:
                with _STEP_LOCK:
                    guided_step(self.state, self.guide, self.params)
                self._publish()
            except Exception as e:  # surface solver failures in status
                self.status = "error"
                self.error = f"{type(e).__name__}: {e}"

    # ---- request side ----

    def send(self, cmd, payload=None):
        self.commands.put((cmd, payload))

    def frame_png(self, slot: FrameSlot) -> tuple[bytes, float, float]:
        cached = self._png_cache
        if cached is not None and cached[0] == slot.index:
            return cached[1], cached[2], cached[3]
        values = slot.density
        lo = float(values.min())
        hi = float(values.max())
        span = hi - lo if hi > lo else 1.0
        img = ((values[::-1, :] - lo) / span * 255.0).round().astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(img, mode="L").save(buf, format="PNG")
        png = buf.getvalue()
        self._png_cache = (slot.index, png, lo, hi)
        return png, lo, hi

    def wait_frame(self, after: int, timeout: float) -> FrameSlot:
        with self.frame_cond:
            self.frame_cond.wait_for(lambda: self.frame.index > after, timeout=timeout)
            return self.frame

    def status_body(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "error": self.error,
            "frame": self.frame.index,
            "time": self.frame.time,
            "c": self.params.c,
            "grid": [self.spec.nx, self.spec.ny],
            "has_sketch": self.sketch is not None,
            "has_guide": self.guide is not None,
            "provenance": self.guide.provenance if self.guide else None,
        }

    def shutdown(self):
        self.send("stop")
        self.worker.join(timeout=2.0)


def create_app(
    data_root: str | Path | None = None,
    default_grid: tuple[int, int] = (256, 256),
    dt: float = 0.1,
    alpha: float = 0.025,
    default_c: float = 1.0,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    root = resolve_data_dir(data_root)
    sessions: dict[str, Session] = {}

    def save_record(ses: Session, name: str | None = None) -> str:
        rid = uuid.uuid4().hex[:12]
        record = {
            "id": rid,
            "session_id": ses.id,
            "name": name,
            "sketch": json.loads(ses.sketch.to_json()) if ses.sketch else None,
            "c": ses.params.c,
            "grid": [ses.spec.nx, ses.spec.ny],
            "frames_completed": ses.frame.index,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        (root / "runs" / f"{rid}.json").write_text(json.dumps(record))
        return rid

    @asynccontextmanager
    async def lifespan(app):
        yield
        for ses in sessions.values():
            if ses.sketch is not None:
                save_record(ses, name="shutdown")
            ses.shutdown()

    app = FastAPI(lifespan=lifespan)

    def get_session(sid: str) -> Session | None:
        return sessions.get(sid)

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/sessions")
    async def create_session(request: Request):
        body = {}
        raw = await request.body()
        if raw:
            try:
                body = json.loads(raw)
            except json.JSONDecodeError:
                return JSONResponse({"detail": "invalid JSON"}, status_code=422)
        record = None
        if body.get("from_record"):
            path = root / "runs" / f"{body['from_record']}.json"
            if not path.exists():
                return JSONResponse({"detail": "record not found"}, status_code=404)
            record = json.loads(path.read_text())
        grid = body.get("grid") or (record["grid"] if record else None) or list(default_grid)
        try:
            spec = GridSpec(int(grid[0]), int(grid[1]))
        except Exception:
            return JSONResponse({"detail": "invalid grid"}, status_code=422)
        c = float(body.get("c", record["c"] if record else default_c))
        sid = uuid.uuid4().hex[:12]
        ses = Session(sid, spec, c=c, dt=dt, alpha=alpha)
        sessions[sid] = ses
        if record and record.get("sketch"):
            doc = SketchDoc.from_json(json.dumps(record["sketch"]))
            ses.sketch = doc
            ses.send("sketch", doc)
        return {"id": sid, "grid": [spec.nx, spec.ny], "c": c}

    @app.get("/sessions")
    def list_sessions():
        return [s.status_body() for s in sessions.values()]

    @app.put("/sessions/{sid}/sketch")
    async def put_sketch(sid: str, request: Request):
        ses = get_session(sid)
        if ses is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        try:
            doc = SketchDoc.from_json((await request.body()).decode())
        except (SketchError, UnicodeDecodeError) as e:
            return JSONResponse({"detail": str(e)}, status_code=422)
        if doc.canvas.shape != ses.spec.shape:
            return JSONResponse({"detail": "sketch canvas does not match session grid"}, 422)
        ses.sketch = doc  # visible immediately; grid updates land between steps
        ses.send("sketch", doc)
        return {"strokes": len(doc.strokes)}

    @app.post("/sessions/{sid}/guide")
    async def post_guide(sid: str, request: Request):
        ses = get_session(sid)
        if ses is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        body = json.loads((await request.body()) or b"{}")
        provider = body.get("provider", "baseline")
        doc = ses.sketch
        if doc is None:
            return JSONResponse({"detail": "no sketch submitted"}, status_code=422)
        try:
            if provider == "baseline":
                guide = baseline_guide(
                    doc,
                    band_radius=float(body.get("band_radius", 4.0)),
                    speed=float(body.get("speed", 1.0)),
                )
            elif provider == "external":
                command = body.get("command")
                if not command:
                    return JSONResponse({"detail": "external provider needs a command"}, 422)
                guide = external_guide(doc, command, timeout=float(body.get("timeout", 10.0)))
            else:
                return JSONResponse({"detail": f"unknown provider {provider!r}"}, 422)
        except SketchError as e:
            return JSONResponse({"detail": str(e)}, status_code=422)
        except ProviderError as e:
            return JSONResponse(
                {"detail": str(e), "fallback": "baseline"}, status_code=502
            )
        ses.send("guide", guide)
        return {"provenance": guide.provenance, "region_cells": guide.omega.count()}

    @app.put("/sessions/{sid}/params")
    async def put_params(sid: str, request: Request):
        ses = get_session(sid)
        if ses is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        body = json.loads((await request.body()) or b"{}")
        try:
            c = float(body["c"])
            if c < 0:
                raise ValueError
        except (KeyError, TypeError, ValueError):
            return JSONResponse({"detail": "params need a non-negative c"}, status_code=422)
        ses.send("params", c)
        return {"c": c}

    @app.post("/sessions/{sid}/{action}")
    def post_action(sid: str, action: str):
        ses = get_session(sid)
        if ses is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        if action == "save":
            return {"record_id": save_record(ses)}
        if action not in ("start", "pause", "reset"):
            return JSONResponse({"detail": f"unknown action {action!r}"}, status_code=404)
        ses.send(action)
        return {"status": "accepted"}

    @app.get("/sessions/{sid}/status")
    def get_status(sid: str):
        ses = get_session(sid)
        if ses is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        return ses.status_body()

    @app.get("/sessions/{sid}/frame")
    def get_frame(sid: str, after: int = -1, wait: float = 0.0):
        ses = get_session(sid)
        if ses is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        slot = ses.wait_frame(after, timeout=min(wait, 30.0)) if wait > 0 else ses.frame
        if slot.index <= after:
            return Response(status_code=204, headers={"X-Frame-Index": str(slot.index)})
        png, lo, hi = ses.frame_png(slot)
        return Response(
            content=png,
            media_type="image/png",
            headers={
                "X-Frame-Index": str(slot.index),
                "X-Sim-Time": f"{slot.time:.6f}",
                "X-Density-Min": f"{lo:.9g}",
                "X-Density-Max": f"{hi:.9g}",
            },
        )

    @app.get("/runs")
    def list_runs():
        out = []
        for p in sorted((root / "runs").glob("*.json")):
            out.append(json.loads(p.read_text()))
        return out

    @app.get("/runs/{rid}")
    def get_run(rid: str):
        path = root / "runs" / f"{rid}.json"
        if not path.exists():
            return JSONResponse({"detail": "record not found"}, status_code=404)
        return json.loads(path.read_text())

    @app.get("/sketches")
    def list_sketches():
        out = []
        for p in sorted((root / "sketches").glob("*.json")):
            data = json.loads(p.read_text())
            out.append({"id": p.stem, "name": data.get("name")})
        return out

    @app.post("/sketches")
    async def save_sketch(request: Request):
        body = json.loads((await request.body()) or b"{}")
        try:
            doc = SketchDoc.from_json(json.dumps(body.get("doc")))
        except SketchError as e:
            return JSONResponse({"detail": str(e)}, status_code=422)
        sk_id = uuid.uuid4().hex[:12]
        (root / "sketches" / f"{sk_id}.json").write_text(
            json.dumps({"name": body.get("name"), "doc": json.loads(doc.to_json())})
        )
        return {"id": sk_id}

    @app.get("/sketches/{sk_id}")
    def get_sketch(sk_id: str):
        path = root / "sketches" / f"{sk_id}.json"
        if not path.exists():
            return JSONResponse({"detail": "sketch not found"}, status_code=404)
        return json.loads(path.read_text())

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
