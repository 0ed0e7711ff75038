"""Rating-session HTTP service: the server half of the rating interface.

A deliberately small lab instrument (stdlib http.server, localhost by
default, no auth). Subjects get their own seeded stimulus order; every
acknowledged rating is flushed and fsynced to the ratings CSV before the
response goes out. Image URLs are opaque tokens so raters never see
distortion families or filenames.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .subjective import RATINGS_HEADER
from .utils import derive_seed

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".ppm": "image/x-portable-pixmap",
    ".svg": "image/svg+xml",
}


@dataclass
class StimulusPair:
    stimulus_id: str
    reference_image: Path
    distorted_image: Path


@dataclass
class Session:
    session_id: str
    subject_id: str
    order: list[str]
    cursor: int = 0
    rated: set[str] = field(default_factory=set)
    submissions: list[dict] = field(default_factory=list)


class RatingStore:
    """All mutable service state; a single lock serializes writers."""

    def __init__(self, stimuli: list[StimulusPair], ratings_path: Path,
                 study_seed: int = 0, score_min: int = 0, score_max: int = 100):
        if not stimuli:
            raise ValueError("session config lists no stimuli")
        self.stimuli = {s.stimulus_id: s for s in stimuli}
        self.stimulus_ids = [s.stimulus_id for s in stimuli]
        self.ratings_path = Path(ratings_path)
        self.study_seed = study_seed
        self.score_min = score_min
        self.score_max = score_max
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.image_tokens: dict[str, Path] = {}
        for s in stimuli:
            for p in (s.reference_image, s.distorted_image):
                self.image_tokens[self._token(p)] = Path(p)

    @staticmethod
    def _token(path: Path) -> str:
        return hashlib.sha1(str(path).encode()).hexdigest()[:16]

    def image_url(self, path: Path) -> str:
        return f"/img/{self._token(path)}"

    # -- sessions ------------------------------------------------------------

    def create_session(self, subject_id: str) -> Session:
        with self.lock:
            rng = np.random.default_rng(derive_seed(self.study_seed, subject_id))
            order = [self.stimulus_ids[i] for i in rng.permutation(len(self.stimulus_ids))]
            sid = f"{subject_id}-{len(self.sessions):04d}"
            session = Session(session_id=sid, subject_id=subject_id, order=order)
            self.sessions[sid] = session
            return session

    def next_stimulus(self, sid: str) -> dict:
        with self.lock:
            session = self._session(sid)
            total = len(session.order)
            if session.cursor >= total:
                return {"done": True, "total": total}
            stimulus = self.stimuli[session.order[session.cursor]]
            return {
                "stimulus_id": stimulus.stimulus_id,
                "reference_image_url": self.image_url(stimulus.reference_image),
                "distorted_image_url": self.image_url(stimulus.distorted_image),
                "progress": {"done": session.cursor, "total": total},
            }

    def rate(self, sid: str, stimulus_id: str, score) -> dict:
        if not isinstance(score, int) or isinstance(score, bool):
            raise ValidationError(f"score must be an integer, got {score!r}")
        if not self.score_min <= score <= self.score_max:
            raise ValidationError(
                f"score {score} outside [{self.score_min}, {self.score_max}]")
        with self.lock:
            session = self._session(sid)
            if session.cursor >= len(session.order):
                raise ConflictError("session already complete")
            current = session.order[session.cursor]
            if stimulus_id in session.rated:
                raise ConflictError(f"stimulus {stimulus_id} already rated")
            if stimulus_id != current:
                raise ConflictError(
                    f"stimulus {stimulus_id} is not the currently served one")
            record = {
                "subject_id": session.subject_id,
                "stimulus_id": stimulus_id,
                "score": score,
                "session_id": session.session_id,
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
            self._append_rating(record)
            session.rated.add(stimulus_id)
            session.submissions.append(record)
            session.cursor += 1
            return {"ok": True, "done": session.cursor, "total": len(session.order)}

    def export_csv(self, sid: str) -> str:
        with self.lock:
            session = self._session(sid)
            lines = [",".join(RATINGS_HEADER)]
            for r in session.submissions:
                lines.append(
                    f"{r['subject_id']},{r['stimulus_id']},{r['score']},"
                    f"{r['session_id']},{r['timestamp']}"
                )
            return "\n".join(lines) + "\n"

    def _session(self, sid: str) -> Session:
        if sid not in self.sessions:
            raise NotFoundError(f"unknown session {sid}")
        return self.sessions[sid]

    def _append_rating(self, record: dict) -> None:
        # durable append: a rating acknowledged to the client survives a crash
        new_file = not self.ratings_path.exists()
        self.ratings_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.ratings_path, "a", newline="") as fh:
            if new_file:
                fh.write(",".join(RATINGS_HEADER) + "\n")
            fh.write(
                f"{record['subject_id']},{record['stimulus_id']},{record['score']},"
                f"{record['session_id']},{record['timestamp']}\n"
            )
            fh.flush()
            os.fsync(fh.fileno())


class ValidationError(ValueError):
    pass


class ConflictError(ValueError):
    pass


class NotFoundError(ValueError):
    pass


def make_handler(store: RatingStore, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _file(self, path: Path) -> None:
            if not path.is_file():
                self._json(404, {"error": f"not found: {self.path}"})
                return
            body = path.read_bytes()
            self.send_response(200)
            ctype = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            try:
                parts = self.path.strip("/").split("/")
                if self.path == "/" and ui_dir is not None:
                    self._file(ui_dir / "index.html")
                elif parts[0] == "img" and len(parts) == 2:
                    target = store.image_tokens.get(parts[1])
                    if target is None:
                        self._json(404, {"error": "unknown image token"})
                    else:
                        self._file(target)
                elif parts[:2] == ["api", "session"] and len(parts) == 4:
                    sid, action = parts[2], parts[3]
                    if action == "next":
                        self._json(200, store.next_stimulus(sid))
                    elif action == "export":
                        body = store.export_csv(sid).encode()
                        self.send_response(200)
                        self.send_header("Content-Type", "text/csv; charset=utf-8")
                        self.send_header("Content-Length", str(len(body)))
                        self.end_headers()
                        self.wfile.write(body)
                    else:
                        self._json(404, {"error": f"unknown action {action}"})
                elif ui_dir is not None and len(parts) >= 1 and parts[0]:
                    candidate = (ui_dir / "/".join(parts)).resolve()
                    if ui_dir.resolve() in candidate.parents or candidate == ui_dir.resolve():
                        self._file(candidate)
                    else:
                        self._json(404, {"error": "not found"})
                else:
                    self._json(404, {"error": "not found"})
            except NotFoundError as exc:
                self._json(404, {"error": str(exc)})
            except Exception as exc:  # noqa: BLE001 - report, don't kill the thread
                self._json(500, {"error": str(exc)})

        def do_POST(self):
            try:
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                parts = self.path.strip("/").split("/")
                if parts == ["api", "session"]:
                    subject = str(payload.get("subject_id", "")).strip()
                    if not subject:
                        raise ValidationError("subject_id is required")
                    session = store.create_session(subject)
                    self._json(200, {
                        "session_id": session.session_id,
                        "subject_id": session.subject_id,
                        "total": len(session.order),
                    })
                elif parts[:2] == ["api", "session"] and len(parts) == 4 and parts[3] == "rate":
                    result = store.rate(parts[2], payload.get("stimulus_id"),
                                        payload.get("score"))
                    self._json(200, result)
                else:
                    self._json(404, {"error": "not found"})
            except ValidationError as exc:
                self._json(400, {"error": str(exc)})
            except ConflictError as exc:
                self._json(409, {"error": str(exc)})
            except NotFoundError as exc:
                self._json(404, {"error": str(exc)})
            except json.JSONDecodeError as exc:
                self._json(400, {"error": f"bad json: {exc}"})
            except Exception as exc:  # noqa: BLE001
                self._json(500, {"error": str(exc)})

    return Handler


def serve_ratings(store: RatingStore, host: str = "127.0.0.1", port: int = 8350,
                  ui_dir: Path | None = None) -> ThreadingHTTPServer:
    """Build the server; caller decides between serve_forever and a thread."""
    handler = make_handler(store, ui_dir)
    return ThreadingHTTPServer((host, port), handler)
