"""Session-oriented HTTP service for live adaptive tests.

Every accepted answer is appended to a single JSONL event log before the
response is sent; restarting the service replays the log, so an existing
session sees identical next-question and evaluation responses afterwards.
Duplicate or out-of-order answer submissions are rejected with a conflict
unless they exactly repeat an already-accepted event (safe client retries).
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Header, HTTPException
from pydantic import BaseModel, Field

from . import engine
from .model import ModelError, NetworkModel, load_model, serialize


class PolicyBody(BaseModel):
    kind: str = "entropy_gain"
    model_kind: str = "bayesian"
    credal_bound: str = "lower"


class RuleBody(BaseModel):
    kind: str = "exhaust"
    threshold: float = 0.25
    max_questions: int = 0


class CreateSessionBody(BaseModel):
    model_id: str
    policy: PolicyBody = Field(default_factory=PolicyBody)
    rule: RuleBody = Field(default_factory=RuleBody)
    seed: int = 0


class AnswerBody(BaseModel):
    question_id: str
    state: str
    sequence: int


class UploadModelBody(BaseModel):
    model_id: str
    document: dict


@dataclass
class ServerSession:
    session_id: str
    model_id: str
    policy: engine.PickPolicy
    rule: engine.StoppingRule
    seed: int
    created_at: float
    state: engine.SessionState
    seq: int = 0
    accepted: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def finished(self) -> bool:
        return engine.should_stop(self.state, self.rule, self.policy)

    def descriptor(self) -> dict:
        return {
            "session_id": self.session_id,
            "model_id": self.model_id,
            "policy": {
                "kind": self.policy.kind,
                "model_kind": self.policy.model_kind,
                "credal_bound": self.policy.credal_bound,
            },
            "rule": {
                "kind": self.rule.kind,
                "threshold": self.rule.threshold,
                "max_questions": self.rule.max_questions,
            },
            "created_at": self.created_at,
            "status": "finished" if self.finished else "active",
        }


class EventLog:
    """Append-only JSONL store; every event is flushed before returning."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        line = json.dumps(event, separators=(",", ":"))
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(json.loads(line))
        return out


def _grade_payload(grades: dict[str, engine.GradeValue]) -> dict:
    out = {}
    for skill, grade in grades.items():
        if grade.value is not None:
            out[skill] = {"value": grade.value, "midpoint": grade.value}
        else:
            out[skill] = {
                "lower": grade.bounds[0],
                "upper": grade.bounds[1],
                "midpoint": grade.midpoint,
            }
    return out


def _overall_midpoint(grades: dict[str, engine.GradeValue]) -> float:
    mids = [
        g.value if g.value is not None else g.midpoint for g in grades.values()
    ]
    return sum(mids) / len(mids)


class Service:
    def __init__(
        self,
        models_dir: str | Path,
        store_path: str | Path,
        instructor_token: str = "",
        strict_offered: bool = False,
    ):
        self.models_dir = Path(models_dir)
        self.models_dir.mkdir(parents=True, exist_ok=True)
        self.log = EventLog(store_path)
        self.instructor_token = instructor_token
        self.strict_offered = strict_offered
        self.models: dict[str, NetworkModel] = {}
        self.sessions: dict[str, ServerSession] = {}
        self._create_lock = threading.Lock()
        self._load_models()
        self._replay()

    # -- state building -----------------------------------------------------

    def _load_models(self) -> None:
        for path in sorted(self.models_dir.glob("*.model")):
            try:
                self.models[path.stem] = load_model(path.read_text(encoding="utf-8"))
            except ModelError as exc:
                raise ModelError(f"{path}: {exc}") from None

    def _replay(self) -> None:
        for event in self.log.read_all():
            if event["type"] == "session_created":
                self._restore_session(event)
            elif event["type"] == "answer_accepted":
                server = self.sessions.get(event["session_id"])
                if server is None:
                    continue
                self._apply_answer(server, event["question_id"], event["state"])
                server.seq += 1
                server.accepted.append(
                    {
                        "seq": event["seq"],
                        "question_id": event["question_id"],
                        "state": event["state"],
                    }
                )

    def _restore_session(self, event: dict) -> None:
        model = self.models.get(event["model_id"])
        if model is None:
            return
        policy = engine.PickPolicy(**event["policy"])
        rule = engine.StoppingRule(**event["rule"])
        state = engine.new_session(model, rng_seed=event["seed"], record_trace=True)
        self.sessions[event["session_id"]] = ServerSession(
            session_id=event["session_id"],
            model_id=event["model_id"],
            policy=policy,
            rule=rule,
            seed=event["seed"],
            created_at=event["created_at"],
            state=state,
        )

    @staticmethod
    def _apply_answer(server: ServerSession, question: str, state_label: str) -> None:
        scores: tuple = ()
        if server.policy.kind in ("entropy_gain", "dm_gain"):
            _, scores = engine.pick_next(server.state, server.policy)
        server.state = engine.submit_answer(
            server.state, question, state_label, scores, server.policy.kind
        )

    # -- handlers -------------------------------------------------------------

    def upload_model(self, body: UploadModelBody) -> dict:
        text = json.dumps(body.document, indent=2) + "\n"
        try:
            model = load_model(text)
        except ModelError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        with self._create_lock:
            self.models[body.model_id] = model
            (self.models_dir / f"{body.model_id}.model").write_text(
                serialize(model), encoding="utf-8"
            )
        return {"model_id": body.model_id, "questions": len(model.questions())}

    def create_session(self, body: CreateSessionBody) -> dict:
        model = self.models.get(body.model_id)
        if model is None:
            raise HTTPException(status_code=404, detail=f"unknown model {body.model_id!r}")
        try:
            policy = engine.PickPolicy(**body.policy.model_dump())
            rule = engine.StoppingRule(**body.rule.model_dump())
            if policy.model_kind != model.kind:
                raise engine.SessionError(
                    f"policy model_kind {policy.model_kind!r} does not match "
                    f"model kind {model.kind!r}"
                )
            state = engine.new_session(model, rng_seed=body.seed, record_trace=True)
        except (engine.SessionError, ModelError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = uuid.uuid4().hex
        server = ServerSession(
            session_id=session_id,
            model_id=body.model_id,
            policy=policy,
            rule=rule,
            seed=body.seed,
            created_at=time.time(),
            state=state,
        )
        with self._create_lock:
            self.sessions[session_id] = server
        self.log.append(
            {
                "type": "session_created",
                "session_id": session_id,
                "model_id": body.model_id,
                "policy": body.policy.model_dump(),
                "rule": body.rule.model_dump(),
                "seed": body.seed,
                "created_at": server.created_at,
            }
        )
        return server.descriptor()

    def _session(self, session_id: str) -> ServerSession:
        server = self.sessions.get(session_id)
        if server is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return server

    def next_question(self, session_id: str, instructor: bool) -> dict:
        server = self._session(session_id)
        with server.lock:
            if server.finished:
                return {
                    "finished": True,
                    "evaluation_url": f"/sessions/{session_id}/evaluation",
                    "evaluation": _grade_payload(engine.evaluate(server.state)),
                }
            question, scores = engine.pick_next(server.state, server.policy)
            var = server.state.model.variable(question)
            payload: dict[str, Any] = {
                "finished": False,
                "question": {
                    "id": question,
                    "text": var.name,
                    "options": list(var.states),
                },
                "sequence": server.seq,
                "progress": {
                    "answered": len(server.state.evidence_items),
                    "remaining": len(server.state.remaining),
                },
            }
            if instructor:
                payload["scores"] = [
                    {
                        "question": s.question,
                        "conditional": s.conditional,
                        "gain": s.gain,
                        "bounds": list(s.bounds) if s.bounds else None,
                    }
                    for s in scores
                ]
            return payload

    def post_answer(self, session_id: str, body: AnswerBody) -> dict:
        server = self._session(session_id)
        with server.lock:
            if body.sequence < server.seq:
                previous = (
                    server.accepted[body.sequence]
                    if body.sequence < len(server.accepted)
                    else None
                )
                if (
                    previous
                    and previous["question_id"] == body.question_id
                    and previous["state"] == body.state
                ):
                    # Exact duplicate of an accepted event: idempotent retry.
                    return self._progress(server, duplicate=True)
                raise HTTPException(
                    status_code=409,
                    detail=f"stale sequence {body.sequence}, expected {server.seq}",
                )
            if body.sequence > server.seq:
                raise HTTPException(
                    status_code=409,
                    detail=f"sequence {body.sequence} ahead of {server.seq}",
                )
            if server.finished:
                raise HTTPException(status_code=409, detail="session is finished")
            if body.question_id in server.state.evidence:
                raise HTTPException(
                    status_code=409,
                    detail=f"question {body.question_id!r} already answered",
                )
            if self.strict_offered:
                offered, _ = engine.pick_next(server.state, server.policy)
                if body.question_id != offered:
                    raise HTTPException(
                        status_code=409,
                        detail=f"expected answer to {offered!r}",
                    )
            try:
                self._apply_answer(server, body.question_id, body.state)
            except (engine.SessionError, ModelError) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            self.log.append(
                {
                    "type": "answer_accepted",
                    "session_id": session_id,
                    "seq": server.seq,
                    "question_id": body.question_id,
                    "state": body.state,
                }
            )
            server.accepted.append(
                {
                    "seq": server.seq,
                    "question_id": body.question_id,
                    "state": body.state,
                }
            )
            server.seq += 1
            return self._progress(server, duplicate=False)

    @staticmethod
    def _progress(server: ServerSession, duplicate: bool) -> dict:
        grades = engine.evaluate(server.state)
        return {
            "accepted": True,
            "duplicate": duplicate,
            "answered": len(server.state.evidence_items),
            "sequence": server.seq,
            "finished": server.finished,
            "evaluation_midpoint": _overall_midpoint(grades),
        }

    def evaluation(self, session_id: str) -> dict:
        server = self._session(session_id)
        with server.lock:
            return {
                "session": server.descriptor(),
                "grades": _grade_payload(engine.evaluate(server.state)),
            }

    def trace(self, session_id: str) -> dict:
        server = self._session(session_id)
        with server.lock:
            return {
                "session": server.descriptor(),
                "answers": list(server.accepted),
                "trace": engine.export_trace(server.state),
                "posterior": engine.skill_report(server.state),
            }


def create_app(
    models_dir: str | Path,
    store_path: str | Path,
    instructor_token: str = "",
    strict_offered: bool = False,
) -> FastAPI:
    service = Service(models_dir, store_path, instructor_token, strict_offered)
    app = FastAPI(title="credalcat service")
    app.state.service = service

    def _is_instructor(token: str | None) -> bool:
        return bool(service.instructor_token) and token == service.instructor_token

    @app.get("/health")
    def health():
        return {"status": "ok", "models": sorted(service.models)}

    @app.post("/models", status_code=201)
    def upload_model(body: UploadModelBody):
        return service.upload_model(body)

    @app.get("/models")
    def list_models():
        out = []
        for model_id, model in sorted(service.models.items()):
            out.append(
                {
                    "model_id": model_id,
                    "kind": model.kind,
                    "skills": list(model.skills()),
                    "questions": list(model.questions()),
                }
            )
        return out

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        return service.create_session(body)

    @app.get("/sessions/{session_id}/next")
    def next_question(
        session_id: str, x_instructor_token: str | None = Header(default=None)
    ):
        return service.next_question(session_id, _is_instructor(x_instructor_token))

    @app.post("/sessions/{session_id}/answers")
    def post_answer(session_id: str, body: AnswerBody):
        return service.post_answer(session_id, body)

    @app.get("/sessions/{session_id}/evaluation")
    def evaluation(session_id: str):
        return service.evaluation(session_id)

    @app.get("/sessions/{session_id}/trace")
    def trace(
        session_id: str, x_instructor_token: str | None = Header(default=None)
    ):
        if not _is_instructor(x_instructor_token):
            raise HTTPException(status_code=403, detail="instructor token required")
        return service.trace(session_id)

    return app
