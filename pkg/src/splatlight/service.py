"""Local render service: scripted /render plus an interactive channel.

Endpoints:
  GET  /info          model stats and relight-cache counters
  POST /render        JSON render request -> PNG bytes
  WS   /interactive   client streams state updates, server pushes frames

Interactive protocol: the client sends JSON text messages
{"seq": int, "state": {<render request>}}. The server renders the most
recent state only (latest-wins; a burst of k updates yields between 1 and
k frames, always ending with the final state) and pushes binary messages
of 4 little-endian sequence bytes followed by the PNG payload.

One scene snapshot is shared read-only across handlers; a process-wide
lock serializes renders; the relight cache persists across requests, so
camera-only changes perform zero relight work (see /info counters).
"""
from __future__ import annotations

import asyncio
import struct
import threading

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool

from .formats import load_environment, load_model, png_bytes
from .optimize import tone_map
from .rasterize import Camera, render
from .relight import ComponentMask, RelightCache
from .scene import PARAMS_PER_PRIMITIVE, DirectionalLight, PointLight


class RequestError(ValueError):
    """Client-side problem with a render request."""


def parse_camera(doc, max_resolution: int) -> Camera:
    if not isinstance(doc, dict):
        raise RequestError("camera must be an object")
    width = int(doc.get("width", 256))
    height = int(doc.get("height", 256))
    if not (1 <= width <= max_resolution and 1 <= height <= max_resolution):
        raise RequestError(f"resolution out of bounds (max {max_resolution})")
    if "orbit" in doc:
        orbit = doc["orbit"]
        azimuth = float(orbit.get("azimuth", 0.0))
        elevation = float(orbit.get("elevation", 0.0))
        radius = float(orbit.get("radius", 3.0))
        if radius <= 0:
            raise RequestError("orbit radius must be positive")
        target = np.asarray(orbit.get("target", (0.0, 0.0, 0.0)), dtype=np.float64)
        eye = target + radius * np.array([
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
            np.cos(elevation) * np.cos(azimuth),
        ])
        return Camera.look_at(eye=eye, target=target, width=width, height=height,
                              fov_deg=float(orbit.get("fov_deg", 50.0)))
    try:
        rotation = np.asarray(doc["rotation"], dtype=np.float64).reshape(3, 3)
        translation = np.asarray(doc["translation"], dtype=np.float64).reshape(3)
        return Camera(fx=float(doc["fx"]), fy=float(doc["fy"]),
                      cx=float(doc["cx"]), cy=float(doc["cy"]),
                      width=width, height=height,
                      rotation=rotation, translation=translation)
    except (KeyError, ValueError) as exc:
        raise RequestError(f"bad camera: {exc}") from exc


def parse_mask(doc) -> ComponentMask:
    if doc is None:
        return ComponentMask()
    try:
        return ComponentMask(
            diffuse=bool(doc.get("diffuse", True)),
            directional=bool(doc.get("directional", True)),
            direct=bool(doc.get("direct", True)),
            indirect=bool(doc.get("indirect", True)),
        )
    except ValueError as exc:
        raise RequestError(str(exc)) from exc


class RenderService:
    def __init__(self, scene, env_dir=None, max_resolution: int = 1024):
        self.scene = scene
        self.env_dir = env_dir
        self.max_resolution = max_resolution
        self.cache = RelightCache()
        self.render_lock = threading.Lock()
        self._env_cache = {}

    MAX_LIGHTS = 64

    def parse_lights(self, docs) -> list:
        if docs is None:
            return []
        if not isinstance(docs, list):
            raise RequestError("lights must be a list")
        if len(docs) > self.MAX_LIGHTS:
            raise RequestError(f"too many lights (max {self.MAX_LIGHTS})")
        lights = []
        for i, doc in enumerate(docs):
            try:
                kind = doc["type"]
                if kind == "point":
                    lights.append(PointLight(position=np.asarray(doc["position"], dtype=np.float64),
                                             intensity=np.asarray(doc["intensity"], dtype=np.float64)))
                elif kind == "directional":
                    lights.append(DirectionalLight(direction=np.asarray(doc["direction"], dtype=np.float64),
                                                   radiance=np.asarray(doc["radiance"], dtype=np.float64)))
                elif kind == "env":
                    lights.append(self._environment(doc["id"], int(doc.get("samples", 128))))
                else:
                    raise RequestError(f"lights[{i}]: unknown type {kind!r}")
            except RequestError:
                raise
            except (KeyError, ValueError, TypeError) as exc:
                raise RequestError(f"lights[{i}]: {exc}") from exc
        return lights

    def _environment(self, env_id: str, samples: int):
        from pathlib import Path
        key = (env_id, samples)
        if key in self._env_cache:
            return self._env_cache[key]
        path = Path(env_id)
        if not path.is_absolute():
            if self.env_dir is None:
                raise RequestError("no environment directory configured")
            path = Path(self.env_dir) / env_id
        if not path.exists():
            raise RequestError(f"environment map not found: {env_id}")
        light = load_environment(path, sample_count=samples)
        self._env_cache[key] = light
        return light

    def render_request(self, doc) -> bytes:
        if not isinstance(doc, dict):
            raise RequestError("request body must be a JSON object")
        cam = parse_camera(doc.get("camera", {}), self.max_resolution)
        lights = self.parse_lights(doc.get("lights", []))
        mask = parse_mask(doc.get("mask"))
        apply_tone_map = bool(doc.get("tone_map", True))
        with self.render_lock:
            image = render(self.scene, lights, cam, mask, cache=self.cache)
        if apply_tone_map:
            image = tone_map(image)
        else:
            image = np.clip(image, 0.0, 1.0)
        return png_bytes(image)

    def info(self) -> dict:
        count = len(self.scene)
        return {
            "primitive_count": count,
            "parameter_count": PARAMS_PER_PRIMITIVE * count,
            "parameters_per_primitive": PARAMS_PER_PRIMITIVE,
            "memory_bytes": count * PARAMS_PER_PRIMITIVE * 4,
            "relight_evaluations": self.cache.evaluations,
            "relight_cache_hits": self.cache.hits,
        }


def create_app(scene, env_dir=None, max_resolution: int = 1024) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    service = RenderService(scene, env_dir=env_dir, max_resolution=max_resolution)
    app = FastAPI(title="splatlight render service")
    # Local tool: the viewer may be served from a different port.
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.service = service

    @app.get("/info")
    def info():
        return JSONResponse(service.info())

    @app.post("/render")
    async def render_endpoint(request_doc: dict):
        try:
            png = await run_in_threadpool(service.render_request, request_doc)
        except RequestError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except Exception as exc:  # render failure
            raise HTTPException(status_code=500, detail=f"render failed: {exc}")
        return Response(content=png, media_type="image/png")

    @app.websocket("/interactive")
    async def interactive(ws: WebSocket):
        await ws.accept()
        latest: dict = {}
        fresh = asyncio.Event()
        closed = asyncio.Event()

        async def reader():
            try:
                while True:
                    msg = await ws.receive_json()
                    latest["state"] = msg
                    fresh.set()
            except (WebSocketDisconnect, RuntimeError):
                closed.set()
                fresh.set()

        reader_task = asyncio.create_task(reader())
        try:
            while True:
                await fresh.wait()
                if closed.is_set():
                    break
                fresh.clear()
                msg = latest["state"]
                seq = int(msg.get("seq", 0))
                try:
                    png = await run_in_threadpool(service.render_request,
                                                  msg.get("state", {}))
                except RequestError as exc:
                    await ws.send_json({"seq": seq, "error": str(exc)})
                    continue
                await ws.send_bytes(struct.pack("<I", seq) + png)
        finally:
            reader_task.cancel()
        return

    return app


def serve(model_path, bind: str = "127.0.0.1:8000", env_dir=None,
          max_resolution: int = 1024) -> None:
    """Load the model and serve until interrupted."""
    import uvicorn

    scene = load_model(model_path)
    app = create_app(scene, env_dir=env_dir, max_resolution=max_resolution)
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
