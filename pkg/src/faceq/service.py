"""Web service for live pairwise annotation sessions.

Raters create a session, fetch the next pair, and submit five-level
responses; the schedule phase (tutorial / random / consistency) is never
revealed. Images are addressed by opaque tokens so clients never see ids
that correlate with identity. An admin bearer token (FACEQ_ADMIN_TOKEN)
protects the comparisons export.
"""

from __future__ import annotations

import csv
import os
import secrets
from hashlib import sha256
from io import StringIO
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .errors import FaceqError, OutOfOrder, SessionClosed
from .pairwise import Response, export_comparisons
from .store import SessionStore

ADMIN_TOKEN_ENV = "FACEQ_ADMIN_TOKEN"


class ImageRefs:
    """Opaque, salt-keyed tokens for image ids; stable for one workspace."""

    def __init__(self, image_ids, salt: bytes):
        self._to_ref = {
            i: sha256(salt + i.encode("utf-8")).hexdigest()[:16] for i in image_ids
        }
        self._to_id = {ref: i for i, ref in self._to_ref.items()}

    def ref(self, image_id: str) -> str:
        return self._to_ref[image_id]

    def image_id(self, ref: str) -> str | None:
        return self._to_id.get(ref)


def load_or_create_salt(path: str | Path) -> bytes:
    path = Path(path)
    if path.exists():
        return bytes.fromhex(path.read_text().strip())
    salt = secrets.token_bytes(16)
    path.write_text(salt.hex() + "\n")
    return salt


class CreateSessionBody(BaseModel):
    rater_id: str


class SubmitBody(BaseModel):
    position: int
    response: Response


def _error_body(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def create_app(
    store: SessionStore,
    image_dir: str | Path | None = None,
    salt: bytes = b"",
) -> FastAPI:
    app = FastAPI(title="faceq annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    # tutorial-bank images may live outside the sampling pool but still
    # appear in schedules, so they need refs too
    bank_ids = [
        i
        for pair in store.config.tutorial_bank
        for i in (pair.better_id, pair.worse_id)
    ]
    refs = ImageRefs(dict.fromkeys((*store.pool, *bank_ids)), salt)
    images = Path(image_dir) if image_dir is not None else None

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        try:
            session_id, session = store.create(body.rater_id)
        except FaceqError as exc:
            return JSONResponse(status_code=409, content=_error_body(exc.code, str(exc)))
        return {
            "session_id": session_id,
            "state": session.state.value,
            "total_pairs": len(session.schedule),
            "answered": session.answered,
        }

    @app.get("/sessions/{session_id}/next")
    def next_pair(session_id: str):
        session = store.get(session_id)
        if session is None:
            return JSONResponse(
                status_code=404, content=_error_body("E_UNKNOWN_SESSION", session_id)
            )
        position = session.next_position
        if position is None or position >= len(session.schedule):
            return {"done": True, "verdict": session.state.value}
        pair = session.schedule[position]
        return {
            "done": False,
            "position": position,
            "left_image_ref": refs.ref(pair.left_id),
            "right_image_ref": refs.ref(pair.right_id),
            "phase_hidden": True,
            "answered": session.answered,
            "total_pairs": len(session.schedule),
        }

    @app.post("/sessions/{session_id}/responses")
    def submit(session_id: str, body: SubmitBody):
        if store.get(session_id) is None:
            return JSONResponse(
                status_code=404, content=_error_body("E_UNKNOWN_SESSION", session_id)
            )
        try:
            session = store.record(session_id, body.position, body.response)
        except (OutOfOrder, SessionClosed) as exc:
            return JSONResponse(status_code=409, content=_error_body(exc.code, str(exc)))
        return {"accepted": True, "new_state": session.state.value}

    @app.get("/sessions/{session_id}/status")
    def status(session_id: str):
        session = store.get(session_id)
        if session is None:
            return JSONResponse(
                status_code=404, content=_error_body("E_UNKNOWN_SESSION", session_id)
            )
        return {
            "answered": session.answered,
            "remaining": len(session.schedule) - session.answered,
            "state": session.state.value,
        }

    @app.get("/admin/export")
    def export(request: Request):
        expected = os.environ.get(ADMIN_TOKEN_ENV)
        if not expected:
            return JSONResponse(
                status_code=503,
                content=_error_body("E_NO_ADMIN_TOKEN", f"{ADMIN_TOKEN_ENV} is not set"),
            )
        auth = request.headers.get("authorization", "")
        if not auth.startswith("Bearer ") or not secrets.compare_digest(
            auth[len("Bearer "):], expected
        ):
            return JSONResponse(
                status_code=401, content=_error_body("E_BAD_TOKEN", "invalid bearer token")
            )
        comparisons = export_comparisons(store.sessions().values())
        buf = StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["rater_id", "left_id", "right_id", "response"])
        for row in comparisons.rows:
            writer.writerow([row.rater_id, row.left_id, row.right_id, row.coarse.value])
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    @app.get("/images/{ref}")
    def image(ref: str):
        image_id = refs.image_id(ref)
        if image_id is None or images is None:
            return JSONResponse(
                status_code=404, content=_error_body("E_UNKNOWN_IMAGE", ref)
            )
        path = images / image_id
        if not path.is_file():
            return JSONResponse(
                status_code=404, content=_error_body("E_UNKNOWN_IMAGE", ref)
            )
        return FileResponse(path)

    return app
