"""Local HTTP + WebSocket service exposing training, inspection, editing,
and rendering to the companion UI and scripted clients.

One session, one model. Edits operate on a working copy that is materialized
through the checkpoint encoding at every version boundary, so every render
served here is byte-identical to a CLI render of the exported checkpoint.
The training job owns the model while running; edits are rejected until it
finishes.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import io
import math
import tempfile
import threading
import uuid
from collections import deque
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import fileio
from .core import GaussFieldError, ImageBuffer, ModelConfig
from .edit import apply_transform, select
from .field import Model, psnr, render, train, bake, init_model

UNDO_LIMIT = 64


class TrainRequest(BaseModel):
    image_path: str | None = None
    image_png_base64: str | None = None
    config: dict = Field(default_factory=dict)
    seed: int | None = None


class EditRequest(BaseModel):
    ops: list[dict]


class RenderRequest(BaseModel):
    width: int
    height: int
    region: list[int] | None = None
    format: str = "png"


class TrainResponse(BaseModel):
    job_id: str


class VersionResponse(BaseModel):
    render_version: int


class _Job:
    def __init__(self, job_id: str):
        self.job_id = job_id
        self.status = "running"
        self.error: str | None = None
        self.history: list[dict] = []
        self.thread: threading.Thread | None = None


class SessionState:
    """Mutable single-session state shared by all endpoints."""

    def __init__(self, workdir: str | None = None):
        self.lock = threading.Lock()
        self.model: Model | None = None
        self.version = 0
        self.undo: deque[bytes] = deque(maxlen=UNDO_LIMIT)
        self.job: _Job | None = None
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="gf-"))
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.loop: asyncio.AbstractEventLoop | None = None
        self.sockets: set = set()

    # -- websocket fan-out ---------------------------------------------------

    async def _send_all(self, message: dict) -> None:
        for ws in list(self.sockets):
            try:
                await ws.send_json(message)
            except Exception:
                self.sockets.discard(ws)

    def broadcast(self, message: dict) -> None:
        """Queue a message to every connected socket; safe from any thread."""
        if self.loop is None:
            return
        asyncio.run_coroutine_threadsafe(self._send_all(message), self.loop)

    # -- model handling -------------------------------------------------------

    def training_active(self) -> bool:
        return self.job is not None and self.job.status == "running"

    def require_model(self) -> Model:
        if self.model is None:
            raise HTTPException(status_code=409, detail="no model loaded")
        return self.model


def _json_psnr(value: float | None):
    if value is None:
        return None
    return "inf" if math.isinf(value) else value


def canonical_eval_psnr(model: Model, image: ImageBuffer) -> float:
    """PSNR of the model's quantized training-resolution render vs an image.

    This is the exact computation the CLI `eval` command performs, so the
    service's completed-job status agrees with it to the last bit. The
    render is quantized to 8 bits first: the reference is an 8-bit file, so
    a model evaluated against its own exported render scores infinite.
    """
    out = render(model, model.train_width, model.train_height)
    quantized = ImageBuffer.from_array(fileio.quantize_unit(out.data) / 255.0)
    return psnr(quantized, image)


def _run_training(state: SessionState, job: _Job, image: ImageBuffer,
                  cfg: ModelConfig, seed: int | None) -> None:
    try:
        model = init_model(image, cfg, seed)

        def on_progress(entry: dict) -> None:
            with state.lock:
                job.history.append(entry)
            state.broadcast(
                {
                    "type": "progress",
                    "iter": entry["iteration"],
                    "loss": entry["loss"],
                    "psnr": _json_psnr(entry["psnr"]),
                }
            )

        train(model, image, progress_callback=on_progress)
        bake(model)
        ckpt_path = state.workdir / "model.ckpt"
        fileio.save_checkpoint(model, ckpt_path)
        canonical = fileio.load_checkpoint(ckpt_path)
        final = {
            "iteration": cfg.iterations,
            "loss": job.history[-1]["loss"] if job.history else None,
            "psnr": canonical_eval_psnr(canonical, image),
        }
        with state.lock:
            job.history.append(final)
            state.model = canonical
            state.version += 1
            state.undo.clear()
            job.status = "done"
        state.broadcast({"type": "preview", "version": state.version})
    except Exception as exc:  # surfaced through /api/status
        with state.lock:
            job.status = "error"
            job.error = str(exc)


def _load_request_image(req: TrainRequest) -> ImageBuffer:
    if (req.image_path is None) == (req.image_png_base64 is None):
        raise HTTPException(
            status_code=400,
            detail="provide exactly one of image_path or image_png_base64",
        )
    try:
        if req.image_path is not None:
            return fileio.load_image(req.image_path)
        blob = base64.b64decode(req.image_png_base64, validate=True)
        return fileio.load_image(io.BytesIO(blob))
    except (FileNotFoundError, binascii.Error, GaussFieldError) as exc:
        raise HTTPException(status_code=400, detail=f"cannot load image: {exc}")


def create_app(state: SessionState | None = None, ui_dir: str | None = None) -> FastAPI:
    state = state or SessionState()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        state.loop = asyncio.get_running_loop()
        yield

    app = FastAPI(title="gaussfield service", lifespan=lifespan)
    app.state.session = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["*"],
    )

    @app.post("/api/train", response_model=TrainResponse)
    def start_training(req: TrainRequest):
        image = _load_request_image(req)
        try:
            cfg = ModelConfig.from_dict(req.config)
        except GaussFieldError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with state.lock:
            if state.training_active():
                raise HTTPException(status_code=409, detail="a training job is running")
            job = _Job(uuid.uuid4().hex)
            state.job = job
        job.thread = threading.Thread(
            target=_run_training, args=(state, job, image, cfg, req.seed), daemon=True
        )
        job.thread.start()
        return TrainResponse(job_id=job.job_id)

    @app.get("/api/status")
    def status():
        with state.lock:
            job = state.job
            if job is None:
                return {"state": "idle", "iter": None, "loss": None, "psnr": None}
            last = job.history[-1] if job.history else None
            return {
                "state": job.status,
                "iter": last["iteration"] if last else 0,
                "loss": last["loss"] if last else None,
                "psnr": _json_psnr(last["psnr"]) if last else None,
                "error": job.error,
            }

    @app.get("/api/gaussians")
    def gaussians():
        with state.lock:
            model = state.require_model()
        means = np.ascontiguousarray(model.gaussians.means, dtype="<f4")
        return Response(
            content=means.tobytes(),
            media_type="application/octet-stream",
            headers={
                "x-gaussian-count": str(model.gaussians.count),
                "x-embed-dim": str(model.config.embed_dim),
                "x-baked": "1" if model.baked else "0",
                "x-train-width": str(model.train_width),
                "x-train-height": str(model.train_height),
            },
        )

    @app.post("/api/edit", response_model=VersionResponse)
    def apply_edit(req: EditRequest):
        with state.lock:
            if state.training_active():
                raise HTTPException(status_code=409, detail="training in progress")
            model = state.require_model()
            if not model.baked:
                raise HTTPException(status_code=409, detail="model is not baked")
            try:
                ops = fileio.parse_edit_ops(req.ops)
            except GaussFieldError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            if not ops:
                return VersionResponse(render_version=state.version)
            previous = fileio.checkpoint_bytes(model)
            work = model
            try:
                for sel, transform in ops:
                    ids = select(work.gaussians, sel)
                    work = apply_transform(work, ids, transform)
            except GaussFieldError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            state.model = fileio.canonicalize(work)
            state.undo.append(previous)
            state.version += 1
            version = state.version
        state.broadcast({"type": "preview", "version": version})
        return VersionResponse(render_version=version)

    @app.post("/api/undo", response_model=VersionResponse)
    def undo():
        with state.lock:
            if state.training_active():
                raise HTTPException(status_code=409, detail="training in progress")
            state.require_model()
            if not state.undo:
                raise HTTPException(status_code=409, detail="undo stack is empty")
            state.model = fileio.model_from_bytes(state.undo.pop())
            state.version += 1
            version = state.version
        state.broadcast({"type": "preview", "version": version})
        return VersionResponse(render_version=version)

    @app.post("/api/render")
    def render_view(req: RenderRequest):
        with state.lock:
            model = state.require_model()
            version = state.version
        if req.format != "png":
            raise HTTPException(status_code=400, detail=f"unsupported format {req.format!r}")
        region = tuple(req.region) if req.region is not None else None
        if region is not None and len(region) != 4:
            raise HTTPException(status_code=400, detail="region must be [x0, y0, x1, y1]")
        try:
            buf = render(model, req.width, req.height, region)
        except GaussFieldError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return Response(
            content=fileio.encode_png(buf),
            media_type="image/png",
            headers={"x-render-version": str(version)},
        )

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket):
        await ws.accept()
        state.sockets.add(ws)
        try:
            while True:
                await ws.receive_text()
        except WebSocketDisconnect:
            pass
        finally:
            state.sockets.discard(ws)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
