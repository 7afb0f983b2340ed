"""HTTP session service backing the chat console.

Exposes the conversation loop over JSON endpoints: create a session bound to
one responder model, exchange messages, read back the annotated transcript,
and record human rubric scores. Ratings land in an append-only JSON Lines
file and are aggregated into per-model means on demand. Every response body
carries a protocol version field ``"v": 1``.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import DialogRecord
from .domain import (Goal, GoalSequence, SeekerProfile, Speaker, TaskTemplate,
                     Utterance)
from .errors import ClosedSessionError
from .knowledge import KnowledgeGraph
from .planner import PlannerModel
from .session import (GenerationResponder, RetrievalResponder, Session,
                      TurnResult)

__all__ = [
    "Rating",
    "ServedTemplate",
    "ModelBundle",
    "bundle_from_corpus",
    "create_app",
    "serve",
]

PROTOCOL_VERSION = 1

# Appendix-style rubric bounds. Dialog-level and turn-level scores share the
# good(2)/fair(1)/bad(0) scale; proactivity alone ranges over {-1, 0, 1}.
SCORE_RANGE = (0, 2)
PROACTIVITY_RANGE = (-1, 1)


class TurnScores(BaseModel):
    fluency: int = Field(ge=SCORE_RANGE[0], le=SCORE_RANGE[1])
    appropriateness: int = Field(ge=SCORE_RANGE[0], le=SCORE_RANGE[1])
    informativeness: int = Field(ge=SCORE_RANGE[0], le=SCORE_RANGE[1])
    proactivity: int = Field(ge=PROACTIVITY_RANGE[0], le=PROACTIVITY_RANGE[1])


class Rating(BaseModel):
    """Dialog-level scores, optionally with per-turn annotations."""

    goal_success: int = Field(ge=SCORE_RANGE[0], le=SCORE_RANGE[1])
    coherence: int = Field(ge=SCORE_RANGE[0], le=SCORE_RANGE[1])
    turns: list[TurnScores] = []


class CreateSessionBody(BaseModel):
    model: str
    template_id: int | None = None


class MessageBody(BaseModel):
    text: str


@dataclass(frozen=True)
class ServedTemplate:
    """A task template plus the seeker profile it was authored for."""

    template: TaskTemplate
    profile: SeekerProfile


@dataclass
class ModelBundle:
    """Everything the service needs to run conversations: shared read-only
    model snapshots, the knowledge graph, and the opening templates."""

    graph: KnowledgeGraph
    planner: PlannerModel
    responders: dict
    templates: tuple[ServedTemplate, ...]

    def __post_init__(self):
        if not self.responders:
            raise ValueError("at least one responder is required")
        if not self.templates:
            raise ValueError("at least one task template is required")


def template_from_record(record: DialogRecord) -> TaskTemplate:
    """Reconstruct the record's task template: its goal sequence plus, for
    each goal, whoever spoke first under it."""
    initiators = {}
    for turn in record.turns:
        initiators.setdefault(turn.goal_index, turn.speaker)
    return TaskTemplate(
        name=f"{record.seeker_id}-d{record.dialog_index}",
        goal_sequence=GoalSequence(goals=record.goals),
        initiators=tuple(initiators.get(i, Speaker.SEEKER)
                         for i in range(len(record.goals))),
    )


def bundle_from_corpus(graph, records, planner, ranker=None, generator=None,
                       bank_size=None, beam=None) -> ModelBundle:
    """Assemble a bundle from a corpus: templates come from the dialogs,
    the retrieval bank from their recommender turns (deduplicated, order
    preserved, optionally capped)."""
    responders = {}
    if ranker is not None:
        bank = list(dict.fromkeys(
            t.text for r in records for t in r.turns
            if t.speaker is Speaker.RECOMMENDER))
        if bank_size is not None:
            bank = bank[:bank_size]
        responders["retrieval"] = RetrievalResponder(ranker, bank)
    if generator is not None:
        responders["generation"] = GenerationResponder(generator, beam=beam)
    served = []
    for record in records:
        try:
            served.append(ServedTemplate(template_from_record(record),
                                         record.profile))
        except ValueError:
            continue
    return ModelBundle(graph=graph, planner=planner, responders=responders,
                       templates=tuple(served))


@dataclass
class _Entry:
    session: Session
    model: str
    template: str
    lock: threading.Lock = field(default_factory=threading.Lock)


class _RatingLog:
    """Append-only JSONL store; one rating per session, enforced in memory
    after replaying whatever the file already holds."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._rows: list[dict] = []
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                self._rows = [json.loads(line) for line in fh if line.strip()]

    def has(self, session_id: str) -> bool:
        return any(r["session_id"] == session_id for r in self._rows)

    def append(self, row: dict) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            self._rows.append(row)

    def summary(self) -> dict:
        """Per-model means of every dialog-level and turn-level score."""
        by_model: dict[str, list[dict]] = {}
        for row in self._rows:
            by_model.setdefault(row["model"], []).append(row)
        out = {}
        for model, rows in sorted(by_model.items()):
            entry = {
                "n": len(rows),
                "goal_success": _mean(r["goal_success"] for r in rows),
                "coherence": _mean(r["coherence"] for r in rows),
            }
            turn_rows = [t for r in rows for t in r.get("turns", [])]
            if turn_rows:
                entry["n_turns"] = len(turn_rows)
                for key in ("fluency", "appropriateness", "informativeness",
                            "proactivity"):
                    entry[key] = _mean(t[key] for t in turn_rows)
            out[model] = entry
        return out


def _mean(values) -> float:
    vals = list(values)
    return sum(vals) / len(vals)


def _goal_json(goal: Goal) -> dict:
    return {"type": goal.dialog_type.value, "topic": goal.topic}


def _knowledge_json(result: TurnResult) -> list[dict]:
    weights = result.knowledge_weights
    chips = []
    for i, triple in enumerate(result.knowledge):
        w = float(weights[i]) if i < len(weights) else 0.0
        chips.append({"subject": triple.subject, "predicate": triple.predicate,
                      "object": triple.object, "weight": w})
    chips.sort(key=lambda c: -c["weight"])
    return chips


def _turn_json(result: TurnResult) -> dict:
    return {
        "reply": result.reply.text,
        "active_goal": _goal_json(result.goal),
        "completion_prob": result.completion_prob,
        "goal_changed": result.goal_changed,
        "used_knowledge": _knowledge_json(result),
    }


def _transcript_json(session: Session) -> list[dict]:
    """Interleave utterances with the bot-turn traces; recommender turns
    consume Session.results in order."""
    rows = []
    results = iter(session.results)
    for utt in session.transcript:
        row = {"speaker": utt.speaker.value, "text": utt.text,
               "goal": _goal_json(session.goals[utt.goal_index])}
        if utt.speaker is Speaker.RECOMMENDER:
            result = next(results)
            row["completion_prob"] = result.completion_prob
            row["used_knowledge"] = _knowledge_json(result)
        rows.append(row)
    return rows


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"v": PROTOCOL_VERSION, "error": message})


def create_app(bundle: ModelBundle, ratings_path) -> FastAPI:
    app = FastAPI(title="goaldial session service")
    entries: dict[str, _Entry] = {}
    registry_lock = threading.Lock()
    log = _RatingLog(ratings_path)

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request: Request, exc: RequestValidationError):
        # the protocol promises 400 for schema violations, not 422
        return _error(400, str(exc.errors()[:3]))

    def _get(session_id: str) -> _Entry | None:
        with registry_lock:
            return entries.get(session_id)

    @app.post("/api/session")
    def create_session(body: CreateSessionBody):
        responder = bundle.responders.get(body.model)
        if responder is None:
            return _error(400, f"unknown model {body.model!r}; "
                               f"available: {sorted(bundle.responders)}")
        template_id = 0 if body.template_id is None else body.template_id
        if not 0 <= template_id < len(bundle.templates):
            return _error(400, f"template_id out of range "
                               f"[0, {len(bundle.templates)})")
        served = bundle.templates[template_id]
        session = Session(bundle.planner, responder, bundle.graph,
                          served.profile, served.template)
        entry = _Entry(session, body.model, served.template.name)
        with registry_lock:
            entries[session.session_id] = entry
        opening = None
        if served.template.initiators[0] is Speaker.RECOMMENDER:
            with entry.lock:
                result = session.open()
            if result is not None:
                opening = _turn_json(result)
        return {"v": PROTOCOL_VERSION, "session_id": session.session_id,
                "model": body.model, "template": served.template.name,
                "opening_turn": opening}

    @app.post("/api/session/{session_id}/message")
    def post_message(session_id: str, body: MessageBody):
        entry = _get(session_id)
        if entry is None:
            return _error(404, f"unknown session {session_id!r}")
        if not body.text.strip():
            return _error(400, "message text must be non-empty")
        try:
            with entry.lock:
                result = entry.session.message(body.text)
        except ClosedSessionError:
            return _error(409, f"session {session_id} is closed")
        return {"v": PROTOCOL_VERSION, "session_id": session_id,
                "closed": entry.session.closed, **_turn_json(result)}

    @app.get("/api/session/{session_id}/state")
    def get_state(session_id: str):
        entry = _get(session_id)
        if entry is None:
            return _error(404, f"unknown session {session_id!r}")
        with entry.lock:
            session = entry.session
            return {
                "v": PROTOCOL_VERSION,
                "session_id": session_id,
                "model": entry.model,
                "template": entry.template,
                "closed": session.closed,
                "active_goal": _goal_json(session.current_goal),
                "transcript": _transcript_json(session),
                "rated": log.has(session_id),
            }

    @app.post("/api/session/{session_id}/rating")
    def post_rating(session_id: str, rating: Rating):
        entry = _get(session_id)
        if entry is None:
            return _error(404, f"unknown session {session_id!r}")
        if log.has(session_id):
            return _error(409, f"session {session_id} already rated")
        row = {
            "session_id": session_id,
            "model": entry.model,
            "template": entry.template,
            "goal_success": rating.goal_success,
            "coherence": rating.coherence,
            "turns": [t.model_dump() for t in rating.turns],
            "time": datetime.now(timezone.utc).isoformat(),
        }
        log.append(row)
        return {"v": PROTOCOL_VERSION, "session_id": session_id,
                "recorded": True}

    @app.get("/api/ratings/summary")
    def ratings_summary():
        return {"v": PROTOCOL_VERSION, "models": log.summary()}

    return app


def serve(bundle: ModelBundle, ratings_path, host="127.0.0.1",
          port=8040) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(bundle, ratings_path)
    uvicorn.run(app, host=host, port=port, log_level="warning")
