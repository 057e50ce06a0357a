"""JSON-over-HTTP API for running 2AFC sessions from a browser.

Payloads carry stimulus images as base64-encoded PNGs. The side holding
the original image never appears in a trial payload; correctness is
revealed only in the response to a submitted choice.
"""

from __future__ import annotations

import base64
import io
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .datagen import DatasetRecord
from .session import (
    DISPLAY_SECONDS,
    ExperimentSession,
    SessionConfig,
    SessionStore,
    create_session,
    pool_thresholds,
)

DEFAULT_SAMPLE_SIZE = 15


def _png_b64(arr: np.ndarray) -> str:
    if arr.ndim == 2:
        data = np.where(arr > 0, 255, 0).astype(np.uint8)
        img = Image.fromarray(data, mode="L")
    else:
        data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
        img = Image.fromarray(data, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class CreateSessionRequest(BaseModel):
    observer_id: str
    image_ids: list[str] | None = None
    seed: int | None = None


class ResponseRequest(BaseModel):
    trial_id: str
    chosen_side: str


def create_app(
    records: list[DatasetRecord],
    store_dir: str | Path,
    static_dir: str | Path | None = None,
    config: SessionConfig | None = None,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
) -> FastAPI:
    dataset = {rec.image_id: rec for rec in records}
    if len(dataset) < 2:
        raise ValueError("need at least a calibration image and one measured image")
    calibration_id = sorted(dataset)[0]
    store = SessionStore(store_dir)
    config = config or SessionConfig()
    sessions: dict[str, ExperimentSession] = {}

    app = FastAPI(title="jndnet session service")

    def get_session(session_id: str) -> ExperimentSession:
        if session_id not in sessions:
            try:
                sessions[session_id] = store.load(session_id, dataset)
            except KeyError:
                raise HTTPException(404, f"unknown session {session_id}")
        return sessions[session_id]

    @app.get("/api/images")
    def list_images():
        return {"images": sorted(dataset), "calibration_image": calibration_id}

    @app.post("/api/sessions")
    def new_session(req: CreateSessionRequest):
        if req.image_ids is not None:
            image_ids = req.image_ids
        else:
            pool = sorted(i for i in dataset if i != calibration_id)
            rng = np.random.default_rng(req.seed)
            take = min(sample_size, len(pool))
            image_ids = [pool[int(i)] for i in rng.choice(len(pool), take, replace=False)]
        try:
            session = create_session(
                req.observer_id, image_ids, dataset, calibration_id,
                config=config, seed=req.seed,
            )
        except (KeyError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        sessions[session.session_id] = session
        store.record_created(session)
        return {"session_id": session.session_id, **session.progress()}

    @app.get("/api/sessions/{session_id}")
    def session_status(session_id: str):
        session = get_session(session_id)
        return {"session_id": session_id, "observer_id": session.observer_id,
                **session.progress()}

    @app.get("/api/sessions/{session_id}/next")
    def next_trial(session_id: str):
        session = get_session(session_id)
        if session.status == "finished":
            raise HTTPException(409, "session is finished")
        fresh = session.pending is None
        trial = session.next_trial(dataset)
        if fresh:
            store.record_served(session_id, trial)
        return {
            "trial_id": trial.trial_id,
            "left": _png_b64(trial.left),
            "right": _png_b64(trial.right),
            "mask": _png_b64(trial.mask),
            "deadline_seconds": DISPLAY_SECONDS,
            "calibration": trial.calibration,
            "progress": session.progress(),
        }

    @app.post("/api/sessions/{session_id}/responses")
    def submit_response(session_id: str, req: ResponseRequest):
        session = get_session(session_id)
        try:
            result = session.submit_response(req.trial_id, req.chosen_side)
        except KeyError as exc:
            raise HTTPException(409, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        store.record_response(
            session_id, req.trial_id, req.chosen_side, result["correct"], time.time()
        )
        return result

    @app.get("/api/sessions/{session_id}/thresholds")
    def session_thresholds(session_id: str):
        session = get_session(session_id)
        return {"session_id": session_id, "status": session.status,
                "thresholds": session.finalize()}

    @app.get("/api/thresholds/{image_id}")
    def pooled(image_id: str):
        if image_id not in dataset:
            raise HTTPException(404, f"unknown image {image_id}")
        fitted = []
        for sid in store.session_ids():
            session = get_session(sid)
            if session.status == "finished":
                fitted.append(session.finalize())
        try:
            pair = pool_thresholds(fitted, image_id)
        except ValueError as exc:
            raise HTTPException(404, str(exc))
        return {
            "image_id": image_id,
            "x_t_neg": pair.neg.mean,
            "x_t_pos": pair.pos.mean,
            "neg_ci": [pair.neg.ci_low, pair.neg.ci_high],
            "pos_ci": [pair.pos.ci_low, pair.pos.ci_high],
            "n_observers": pair.neg.n_observers,
        }

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/app", StaticFiles(directory=static_dir, html=True), name="webui")

        @app.get("/")
        def index():
            return FileResponse(Path(static_dir) / "index.html")

    return app
