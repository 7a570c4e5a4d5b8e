"""Streaming gateway: one live session, any number of console viewers.

The session is owned by the server, not by a connection: it starts when the
first client connects and keeps its own (simulated) clock thereafter, so a
viewer can close and reopen mid-session and simply resume rendering from the
next message.  Late joiners first receive the cached `hello` so they know the
field geometry.  Control messages from any viewer mutate the shared session
controls and take effect at the next decision point; the newest click wins.

Outbound messages (all carry "schema": 1):
  hello      width, height, mode, duration, tau, lambda
  blip       index, t_start, t_end, image_pgm (base64 P5)
  decision   t, center [x, y], reason
  subframe   index, t_start, t_end, image_pgm, grid_overlay_pgm
  composite  kind (weighted|linear), after_subframe, image_pgm,
             exposure_pgm, exposure_scale_s, persisted
  status     paused, mode, tau, lambda, p_jump  (after each applied control)
  timing     report {...}          (once, before end)
  end        -
  error      message               (malformed input; session unaffected)

Inbound messages:
  {"schema": 1, "type": "click", "x": int, "y": int}     latched, newest wins
  {"schema": 1, "type": "mode", "mode": "motion|wavelet|manual"}
  {"schema": 1, "type": "set", "tau"?: f, "lambda"?: f, "p_jump"?: f}
  {"schema": 1, "type": "pause"} / {"schema": 1, "type": "resume"}
"""

from __future__ import annotations

import asyncio
import base64
import json
import time

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .reconstruct import pgm_bytes
from .runtime import MODES, AcquisitionPlan, SessionEngine

GATEWAY_SCHEMA = 1


def _b64_pgm(image) -> str:
    return base64.b64encode(pgm_bytes(image)).decode("ascii")


def event_messages(event, plan: AcquisitionPlan) -> list[dict]:
    """Translate one engine event into outbound wire messages."""
    kind, p = event.kind, event.payload
    if kind == "hello":
        return [{
            "schema": GATEWAY_SCHEMA, "type": "hello",
            "width": p["width"], "height": p["height"], "mode": p["mode"],
            "duration": p["duration"], "tau": p["tau"], "lambda": p["lambda"],
        }]
    if kind == "blip":
        f = p["frame"]
        return [{
            "schema": GATEWAY_SCHEMA, "type": "blip", "index": p["index"],
            "t_start": f.t_start, "t_end": f.t_end, "image_pgm": _b64_pgm(f.field),
        }]
    if kind == "decision":
        d = p["decision"]
        return [{
            "schema": GATEWAY_SCHEMA, "type": "decision",
            "t": d.decided_at, "center": list(d.center), "reason": d.reason,
        }]
    if kind == "subframe":
        f = p["frame"]
        return [{
            "schema": GATEWAY_SCHEMA, "type": "subframe", "index": p["index"],
            "t_start": f.t_start, "t_end": f.t_end,
            "image_pgm": _b64_pgm(f.hr_image),
            "grid_overlay_pgm": _b64_pgm(f.grid.boundary_map().astype(float)),
        }]
    if kind == "composite":
        e = p["entry"]
        return [{
            "schema": GATEWAY_SCHEMA, "type": "composite", "kind": e.kind,
            "after_subframe": e.after_subframe,
            "image_pgm": _b64_pgm(e.composite.hr_image),
            "exposure_pgm": _b64_pgm(e.composite.exposure_map / plan.max_exposure),
            "exposure_scale_s": plan.max_exposure,
            "persisted": p["persisted"],
        }]
    if kind == "end":
        return [
            {"schema": GATEWAY_SCHEMA, "type": "timing", "report": p["timing"]},
            {"schema": GATEWAY_SCHEMA, "type": "end"},
        ]
    raise ValueError(f"unmapped event kind {kind}")


class SessionHub:
    """Drives one engine and fans its messages out to attached viewers."""

    def __init__(self, plan: AcquisitionPlan, scene, duration: float, realtime: bool):
        self.plan = plan
        self.scene = scene
        self.duration = duration
        self.realtime = realtime
        self.engine: SessionEngine | None = None
        self.paused = False
        self.hello: dict | None = None
        self.done = False
        self._viewers: list[asyncio.Queue] = []
        self._task: asyncio.Task | None = None
        self._lock = asyncio.Lock()

    async def ensure_started(self) -> None:
        async with self._lock:
            if self._task is None:
                self.engine = SessionEngine(self.plan, self.scene, self.duration)
                self._task = asyncio.create_task(self._drive())

    async def _drive(self) -> None:
        gen = self.engine.events()
        finished = object()
        wall_start = time.monotonic()
        try:
            while True:
                while self.paused:
                    await asyncio.sleep(0.02)
                event = await asyncio.to_thread(next, gen, finished)
                if event is finished:
                    break
                if self.realtime:
                    sim_t = _event_sim_time(event)
                    if sim_t is not None:
                        lag = wall_start + sim_t - time.monotonic()
                        if lag > 0:
                            await asyncio.sleep(lag)
                for msg in event_messages(event, self.plan):
                    if msg["type"] == "hello":
                        self.hello = msg
                    self._broadcast(msg)
                if event.kind == "end":
                    break
        finally:
            self.done = True
            self._broadcast(None)

    def _broadcast(self, msg) -> None:
        for q in list(self._viewers):
            q.put_nowait(msg)

    def attach(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue()
        if self.hello is not None:
            q.put_nowait(self.hello)
        if self.done:
            q.put_nowait(None)
        self._viewers.append(q)
        return q

    def detach(self, q: asyncio.Queue) -> None:
        if q in self._viewers:
            self._viewers.remove(q)

    async def shutdown(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass


def apply_control(raw: str, hub: SessionHub) -> dict:
    """Validate and apply one inbound message; returns the reply message."""
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError as exc:
        return {"schema": GATEWAY_SCHEMA, "type": "error", "message": f"bad JSON: {exc}"}
    if not isinstance(msg, dict) or msg.get("schema") != GATEWAY_SCHEMA:
        return {"schema": GATEWAY_SCHEMA, "type": "error",
                "message": "missing or unsupported schema (want schema=1)"}
    kind = msg.get("type")
    controls = hub.engine.controls
    try:
        if kind == "click":
            x, y = int(msg["x"]), int(msg["y"])
            g = hub.plan.grid
            if not (0 <= x < g.width and 0 <= y < g.height):
                raise ValueError(f"click ({x},{y}) outside {g.width}x{g.height} field")
            controls.submit_click(x, y)
        elif kind == "mode":
            mode = msg["mode"]
            if mode not in MODES or mode == "uniform-baseline":
                raise ValueError(f"cannot switch to mode '{mode}'")
            controls.mode = mode
        elif kind == "set":
            if "tau" in msg:
                controls.tau = float(msg["tau"])
            if "lambda" in msg:
                v = float(msg["lambda"])
                if v < 0:
                    raise ValueError("lambda must be non-negative")
                controls.smoothing_weight = v
            if "p_jump" in msg:
                v = float(msg["p_jump"])
                if not 0 <= v <= 1:
                    raise ValueError("p_jump must be a probability")
                controls.p_jump = v
        elif kind == "pause":
            hub.paused = True
        elif kind == "resume":
            hub.paused = False
        else:
            raise ValueError(f"unknown message type '{kind}'")
    except (KeyError, TypeError, ValueError) as exc:
        return {"schema": GATEWAY_SCHEMA, "type": "error", "message": str(exc)}
    return {
        "schema": GATEWAY_SCHEMA, "type": "status", "paused": hub.paused,
        "mode": controls.mode, "tau": controls.tau,
        "lambda": controls.smoothing_weight, "p_jump": controls.p_jump,
    }


def build_app(plan: AcquisitionPlan, scene, duration: float, realtime: bool = False) -> FastAPI:
    from contextlib import asynccontextmanager

    hub = SessionHub(plan, scene, duration, realtime)

    @asynccontextmanager
    async def lifespan(_app):
        yield
        await hub.shutdown()

    app = FastAPI(title="foveasim gateway", lifespan=lifespan)
    app.state.hub = hub

    @app.get("/healthz")
    def healthz():
        return {"schema": GATEWAY_SCHEMA, "ok": True}

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        await hub.ensure_started()
        queue = hub.attach()

        async def sender():
            while True:
                msg = await queue.get()
                if msg is None:
                    break
                await websocket.send_text(json.dumps(msg, sort_keys=True))

        async def receiver():
            while True:
                raw = await websocket.receive_text()
                await websocket.send_text(json.dumps(apply_control(raw, hub), sort_keys=True))

        send_task = asyncio.create_task(sender())
        recv_task = asyncio.create_task(receiver())
        try:
            await asyncio.wait({send_task, recv_task}, return_when=asyncio.FIRST_COMPLETED)
        finally:
            for task in (send_task, recv_task):
                task.cancel()
                try:
                    await task
                except (asyncio.CancelledError, WebSocketDisconnect, RuntimeError):
                    pass
            hub.detach(queue)

    return app


def _event_sim_time(event):
    p = event.payload
    frame = p.get("frame")
    if frame is not None:
        return frame.t_end
    if "decision" in p:
        return p["decision"].decided_at
    return None
