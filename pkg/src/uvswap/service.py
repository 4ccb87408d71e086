"""HTTP service that administers the forced-choice listening test.

Sessions draw a seeded, condition-balanced sample from the stimulus
manifest (default protocol: 10 originals + 10 U-swapped + 5 vU-swapped,
presented in random order), stream audio, and record one response per
stimulus. Client-visible payloads never carry condition labels or
speaker identities before a session completes; stimulus ids are the
opaque ids from the manifest.

State is an append-only JSON-lines event log per session, replayed on
startup.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .errors import UvswapError
from .harness import (CHOICE_ONE, CHOICE_TWO, StimulusEntry, load_stimuli,
                      score_subjective)

DEFAULT_PROTOCOL = {"original": 10, "u_swap": 10, "vu_swap": 5}
GROUP_CONDITIONS = {
    "original": ("F", "M"),
    "u_swap": ("F<MU", "M<FU"),
    "vu_swap": ("F<MvU", "M<FvU"),
}


class InsufficientStimuli(UvswapError):
    code = "insufficient_stimuli"


class UnknownSession(UvswapError):
    code = "unknown_session"


class UnknownStimulus(UvswapError):
    code = "unknown_stimulus"


class DuplicateResponse(UvswapError):
    code = "duplicate_response"


class OutOfOrder(UvswapError):
    code = "out_of_order"


class IncompleteSession(UvswapError):
    code = "incomplete_session"


HTTP_STATUS = {
    "unknown_session": 404,
    "unknown_stimulus": 404,
    "duplicate_response": 409,
    "out_of_order": 409,
    "incomplete_session": 409,
    "insufficient_stimuli": 409,
}


@dataclass(frozen=True)
class ServiceConfig:
    stimuli_path: str
    data_dir: str
    host: str = "127.0.0.1"
    port: int = 8756
    protocol: dict = field(default_factory=lambda: dict(DEFAULT_PROTOCOL))
    playback_limit: int = 1
    seed: int = 0
    allow_partial_results: bool = False


def load_service_config(stimuli_path=None, data_dir=None, config_file=None,
                        env=None, **overrides) -> ServiceConfig:
    """Config precedence: file < UVSWAP_* environment < explicit overrides."""
    env = os.environ if env is None else env
    values: dict = {}
    if config_file:
        for raw in Path(config_file).read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    for key in ("stimuli_path", "data_dir", "host", "port", "playback_limit",
                "seed", "allow_partial_results", "protocol"):
        env_key = f"UVSWAP_{key.upper()}"
        if env_key in env:
            values[key] = env[env_key]
    if stimuli_path is not None:
        values["stimuli_path"] = stimuli_path
    if data_dir is not None:
        values["data_dir"] = data_dir
    values.update({k: v for k, v in overrides.items() if v is not None})

    for key in ("port", "playback_limit", "seed"):
        if key in values:
            values[key] = int(values[key])
    if "allow_partial_results" in values:
        val = values["allow_partial_results"]
        values["allow_partial_results"] = (
            val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes"))
    if "protocol" in values and isinstance(values["protocol"], str):
        counts = [int(x) for x in values["protocol"].split(",")]
        values["protocol"] = dict(zip(("original", "u_swap", "vu_swap"), counts))
    if "stimuli_path" not in values or "data_dir" not in values:
        raise UvswapError("service config needs stimuli_path and data_dir")
    return ServiceConfig(**values)


@dataclass
class SessionState:
    session_id: str
    seed: int
    order: list[str]
    subject: dict | None = None
    responses: dict[str, str] = field(default_factory=dict)

    @property
    def answered(self) -> int:
        return len(self.responses)

    @property
    def complete(self) -> bool:
        return self.answered == len(self.order)

    def next_unanswered(self) -> str | None:
        for sid in self.order:
            if sid not in self.responses:
                return sid
        return None


class SessionStore:
    """All listening-test state; one writer lock, JSONL event persistence."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.stimuli: dict[str, StimulusEntry] = {
            s.stimulus_id: s for s in load_stimuli(config.stimuli_path)}
        self.sessions: dict[str, SessionState] = {}
        self.created_count = 0
        self._lock = threading.Lock()
        Path(config.data_dir).mkdir(parents=True, exist_ok=True)
        self._replay()

    def _replay(self) -> None:
        for log_path in sorted(Path(self.config.data_dir).glob("*.jsonl")):
            session = None
            for line in log_path.read_text(encoding="utf-8").splitlines():
                event = json.loads(line)
                if event["event"] == "created":
                    session = SessionState(event["session_id"], event["seed"],
                                           event["order"], event.get("subject"))
                    self.sessions[session.session_id] = session
                    self.created_count += 1
                elif event["event"] == "response" and session is not None:
                    session.responses[event["stimulus_id"]] = event["choice"]

    def _log(self, session_id: str, event: dict) -> None:
        path = Path(self.config.data_dir) / f"{session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event) + "\n")

    def _draw_order(self, seed: int) -> list[str]:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5E55)))
        pools: dict[str, list[str]] = {}
        for sid, stim in self.stimuli.items():
            pools.setdefault(stim.condition, []).append(sid)
        chosen: list[str] = []
        for group, count in self.config.protocol.items():
            labels = GROUP_CONDITIONS[group]
            base, extra = divmod(count, len(labels))
            for k, label in enumerate(sorted(labels)):
                quota = base + (1 if k < extra else 0)
                pool = sorted(pools.get(label, []))
                if len(pool) < quota:
                    raise InsufficientStimuli(
                        f"need {quota} stimuli for condition {label!r}, "
                        f"have {len(pool)}")
                chosen.extend(rng.choice(pool, size=quota, replace=False))
        return [chosen[i] for i in rng.permutation(len(chosen))]

    def create_session(self, subject: dict | None = None,
                       seed: int | None = None) -> SessionState:
        with self._lock:
            if seed is None:
                seed = int(np.random.default_rng(
                    np.random.SeedSequence((self.config.seed, self.created_count))
                ).integers(0, 2 ** 31))
            order = self._draw_order(seed)
            session_id = secrets.token_urlsafe(12)
            session = SessionState(session_id, seed, order, subject)
            self.sessions[session_id] = session
            self.created_count += 1
            self._log(session_id, {"event": "created", "session_id": session_id,
                                   "seed": seed, "order": order,
                                   "subject": subject, "ts": time.time()})
            return session

    def get(self, session_id: str) -> SessionState:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def submit(self, session_id: str, stimulus_id: str, choice: str) -> SessionState:
        if choice not in (CHOICE_ONE, CHOICE_TWO):
            raise UvswapError(f"choice must be {CHOICE_ONE!r} or {CHOICE_TWO!r}")
        with self._lock:
            session = self.get(session_id)
            if stimulus_id not in session.order:
                raise UnknownStimulus(f"stimulus {stimulus_id!r} not in this session")
            if stimulus_id in session.responses:
                raise DuplicateResponse(f"stimulus {stimulus_id!r} already answered")
            current = session.next_unanswered()
            if stimulus_id != current:
                raise OutOfOrder(f"current stimulus is {current!r}")
            session.responses[stimulus_id] = choice
            self._log(session_id, {"event": "response", "stimulus_id": stimulus_id,
                                   "choice": choice, "ts": time.time()})
            return session

    def records(self, session: SessionState) -> list[tuple[str, str]]:
        return [(self.stimuli[sid].condition, choice)
                for sid, choice in session.responses.items()]

    def results(self, session_id: str | None, partial: bool):
        allow_partial = partial and self.config.allow_partial_results
        records: list[tuple[str, str]] = []
        if session_id is None:
            for session in self.sessions.values():
                if session.complete or allow_partial:
                    records.extend(self.records(session))
        else:
            session = self.get(session_id)
            if not session.complete and not allow_partial:
                raise IncompleteSession(
                    f"{session.answered}/{len(session.order)} answered")
            records.extend(self.records(session))
        return score_subjective(records)


class SubjectMeta(BaseModel):
    age_band: str | None = None
    gender: str | None = None


class CreateSessionRequest(BaseModel):
    subject: SubjectMeta | None = None
    seed: int | None = None


class SubmitRequest(BaseModel):
    stimulus_id: str
    choice: str


def _results_payload(result) -> dict:
    return {
        "conditions": [
            {"condition": r.condition, "n": r.n, "correct": r.correct,
             "accuracy": round(r.accuracy, 1)}
            for r in result.rows
        ],
        "overall": {"n": result.overall.n, "correct": result.overall.correct,
                    "accuracy": round(result.overall.accuracy, 1)},
    }


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="uvswap listening test")
    store = SessionStore(config)
    app.state.store = store

    @app.exception_handler(UvswapError)
    async def handle_uvswap_error(request: Request, exc: UvswapError):
        status = HTTP_STATUS.get(exc.code, 400)
        return JSONResponse({"code": exc.code, "message": str(exc)},
                            status_code=status)

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionRequest | None = None):
        body = body or CreateSessionRequest()
        subject = body.subject.model_dump() if body.subject else None
        session = store.create_session(subject, body.seed)
        return {"session_id": session.session_id,
                "total_stimuli": len(session.order),
                "playback_limit": config.playback_limit}

    @app.get("/sessions/{session_id}/next")
    def next_stimulus(session_id: str):
        session = store.get(session_id)
        progress = {"answered": session.answered, "total": len(session.order)}
        sid = session.next_unanswered()
        if sid is None:
            return {"done": True, "progress": progress}
        return {
            "done": False,
            "stimulus_id": sid,
            "audio_url": f"/stimuli/{sid}/audio",
            "remaining_plays": config.playback_limit,
            "progress": progress,
        }

    @app.post("/sessions/{session_id}/responses")
    def submit_response(session_id: str, body: SubmitRequest):
        session = store.submit(session_id, body.stimulus_id, body.choice)
        return {"accepted": True, "answered": session.answered,
                "total": len(session.order)}

    @app.get("/sessions/{session_id}/results")
    def session_results(session_id: str, partial: bool = False):
        return _results_payload(store.results(session_id, partial))

    @app.get("/results")
    def all_results(partial: bool = False):
        return _results_payload(store.results(None, partial))

    @app.api_route("/stimuli/{stimulus_id}/audio", methods=["GET", "HEAD"])
    def serve_audio(stimulus_id: str):
        stim = store.stimuli.get(stimulus_id)
        if stim is None:
            raise UnknownStimulus(f"no stimulus {stimulus_id!r}")
        data = Path(stim.wav_path).read_bytes()
        return Response(content=data, media_type="audio/wav",
                        headers={"Content-Length": str(len(data))})

    return app


def run_service(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="info")
