"""Persistent session store: one append-only JSONL event log per session.

State is a pure fold over events, so a restart replays every log and resumes
each session at its exact position. Writes are serialized per session id.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path
from typing import Sequence

from .errors import FaceqError, MalformedRow
from .pairwise import (
    Response,
    Session,
    SessionConfig,
    TutorialPair,
    create_session,
    record_response,
)


def load_session_config(path: str | Path) -> SessionConfig:
    """Session config as JSON: counts, threshold, seed, and the tutorial bank
    ([{"better": id, "worse": id}, ...])."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        bank = tuple(
            TutorialPair(better_id=p["better"], worse_id=p["worse"])
            for p in doc.get("tutorial_bank", [])
        )
        return SessionConfig(
            n_tutorial=int(doc.get("n_tutorial", 6)),
            n_random=int(doc.get("n_random", 974)),
            n_consistency=int(doc.get("n_consistency", 21)),
            tutorial_bank=bank,
            consistency_fail_min=int(doc.get("consistency_fail_min", 10)),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRow(f"{path}: bad session config: {exc}") from None


class SessionStore:
    """Sessions for one annotation campaign (fixed config and image pool)."""

    def __init__(self, root: str | Path, config: SessionConfig, image_pool: Sequence[str]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.pool = tuple(image_pool)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        self._replay_all()

    # -- event log ----------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def _replay_all(self) -> None:
        for path in sorted(self.root.glob("*.jsonl")):
            session_id = path.stem
            session: Session | None = None
            with open(path) as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    if event["event"] == "create":
                        session = create_session(event["rater_id"], self.config, self.pool)
                    elif event["event"] == "response":
                        if session is None:
                            raise MalformedRow(f"{path}:{line_no}: response before create")
                        session = record_response(
                            session, event["position"], Response(event["response"])
                        )
                    else:
                        raise MalformedRow(f"{path}:{line_no}: unknown event {event['event']!r}")
            if session is not None:
                self._sessions[session_id] = session
                self._locks[session_id] = threading.Lock()

    def _append(self, session_id: str, event: dict) -> None:
        with open(self._log_path(session_id), "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    # -- operations -----------------------------------------------------------

    def create(self, rater_id: str) -> tuple[str, Session]:
        with self._store_lock:
            existing = sum(1 for s in self._sessions.values() if s.rater_id == rater_id)
            session_id = sha256(f"{rater_id}:{existing}".encode("utf-8")).hexdigest()[:12]
            if session_id in self._sessions:
                raise FaceqError(f"session id collision for rater {rater_id!r}")
            session = create_session(rater_id, self.config, self.pool)
            self._append(session_id, {"event": "create", "rater_id": rater_id})
            self._sessions[session_id] = session
            self._locks[session_id] = threading.Lock()
            return session_id, session

    def get(self, session_id: str) -> Session | None:
        return self._sessions.get(session_id)

    def record(self, session_id: str, position: int, response: Response) -> Session:
        lock = self._locks.get(session_id)
        if lock is None:
            raise KeyError(session_id)
        with lock:
            session = self._sessions[session_id]
            updated = record_response(session, position, response)
            self._append(
                session_id,
                {"event": "response", "position": position, "response": response.value},
            )
            self._sessions[session_id] = updated
            return updated

    def sessions(self) -> dict[str, Session]:
        return dict(self._sessions)
