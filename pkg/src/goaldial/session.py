"""Live dialog orchestration.

A session owns an append-only transcript, the goal state, and a per-reply
trace. Each seeker message runs the same pipeline a trained system uses
offline: re-estimate completion of the active goal, switch goals when the
planner says so, assemble the turn's knowledge pool, and hand everything to
a responder. The opening goal comes from the caller (a task template or an
explicit goal); the planner takes over from there.

Responders are small adapters over the trained models so retrieval and
generation plug into the same session unchanged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .domain import (DialogType, DialogueContext, Goal, SeekerProfile,
                     Speaker, TaskTemplate, Utterance)
from .errors import ClosedSessionError
from .knowledge import KnowledgeGraph, candidate_knowledge
from .planner import PlannerModel, estimate_completion, plan_next
from .ranker import RankerModel, rank

__all__ = [
    "GoalEvent",
    "TurnResult",
    "RetrievalResponder",
    "GenerationResponder",
    "Session",
]


@dataclass(frozen=True)
class GoalEvent:
    """Outcome of one goal: its type, whether the planner saw it through,
    and whether any reply under it leaned on the knowledge pool."""

    dialog_type: DialogType
    completed: bool
    knowledge_used: bool
    topic: str = ""


@dataclass(frozen=True)
class TurnResult:
    """One reply plus the trace of how it was produced."""

    reply: Utterance
    goal: Goal
    completion_prob: float
    goal_changed: bool
    knowledge_weights: np.ndarray
    knowledge: tuple


class RetrievalResponder:
    """Ranks a fixed response bank and answers with the top candidate."""

    def __init__(self, model: RankerModel, bank):
        self.model = model
        self.bank = tuple(bank)
        if not self.bank:
            raise ValueError("response bank is empty")

    def respond(self, utterances, knowledge, goal):
        ranked = rank(self.model, utterances, self.bank, knowledge, goal)
        weights = ranked.knowledge_weights
        top = weights[ranked.order[0]] if weights.size else np.zeros(0)
        return ranked.best, top


class GenerationResponder:
    """Decodes a reply with the generation model."""

    def __init__(self, model, beam: int | None = None):
        self.model = model
        self.beam = beam

    def respond(self, utterances, knowledge, goal):
        from .generator import generate
        result = generate(self.model, utterances, knowledge, goal,
                          beam=self.beam)
        return result.text, result.knowledge_weights


def _knowledge_hit(weights: np.ndarray) -> bool:
    """True when attention concentrates beyond the uniform floor."""
    n = weights.size
    return bool(n and float(weights.max()) * n > 1.5)


class Session:
    """One conversation. Messages go through plan -> ground -> respond."""

    _ids = itertools.count(1)

    def __init__(self, planner: PlannerModel, responder, graph: KnowledgeGraph,
                 profile: SeekerProfile,
                 opening: TaskTemplate | Goal,
                 know_limit: int = 20,
                 max_turns: int = 40):
        if isinstance(opening, TaskTemplate):
            first = opening.goal_sequence.goals[0]
        else:
            first = opening
        self.session_id = f"s{next(self._ids):06d}"
        self.planner = planner
        self.responder = responder
        self.graph = graph
        self.profile = profile
        self.know_limit = know_limit
        self.max_turns = max_turns
        self._transcript: list[Utterance] = []
        self._goals: list[Goal] = [first]
        self._results: list[TurnResult] = []
        self._events: list[GoalEvent] = []
        self._goal_used_knowledge = False
        self.closed = False

    # -- read-only views -----------------------------------------------------

    @property
    def transcript(self) -> tuple[Utterance, ...]:
        return tuple(self._transcript)

    @property
    def goals(self) -> tuple[Goal, ...]:
        return tuple(self._goals)

    @property
    def current_goal(self) -> Goal:
        return self._goals[-1]

    @property
    def results(self) -> tuple[TurnResult, ...]:
        return tuple(self._results)

    @property
    def goal_events(self) -> tuple[GoalEvent, ...]:
        return tuple(self._events)

    def _context(self) -> DialogueContext:
        return DialogueContext(utterances=tuple(self._transcript),
                               profile=self.profile)

    # -- lifecycle -------------------------------------------------------------

    def open(self) -> TurnResult | None:
        """Produce the opening reply when the recommender speaks first.
        Call at most once, before any message."""
        if self._transcript:
            raise ValueError("session already started")
        return self._reply(completion_prob=0.0, changed=False)

    def message(self, text: str) -> TurnResult:
        """Append a seeker message and produce the reply."""
        if self.closed:
            raise ClosedSessionError(f"session {self.session_id} is closed")
        if not text or not text.strip():
            raise ValueError("message text must be non-empty")
        self._transcript.append(
            Utterance(Speaker.SEEKER, text, len(self._goals) - 1))
        decision = plan_next(self.planner, self.graph, self._context(),
                             self._goals, self.profile)
        p, changed = decision.completion_prob, decision.changed
        if changed:
            self._finish_goal(completed=True)
            self._goals.append(decision.goal)
        result = self._reply(completion_prob=p, changed=changed)
        if len(self._transcript) >= self.max_turns:
            self.close()
        return result

    def _reply(self, completion_prob: float, changed: bool) -> TurnResult:
        goal = self.current_goal
        pool = tuple(candidate_knowledge(self.graph, self._context(), goal,
                                         limit=self.know_limit))
        text, weights = self.responder.respond(tuple(self._transcript), pool,
                                               goal)
        weights = np.asarray(weights, dtype=np.float64)
        self._goal_used_knowledge |= _knowledge_hit(weights)
        reply = Utterance(Speaker.RECOMMENDER, text, len(self._goals) - 1)
        self._transcript.append(reply)
        result = TurnResult(reply=reply, goal=goal,
                            completion_prob=completion_prob,
                            goal_changed=changed,
                            knowledge_weights=weights, knowledge=pool)
        self._results.append(result)
        return result

    def _finish_goal(self, completed: bool) -> None:
        goal = self.current_goal
        self._events.append(GoalEvent(dialog_type=goal.dialog_type,
                                      completed=completed,
                                      knowledge_used=self._goal_used_knowledge,
                                      topic=goal.topic))
        self._goal_used_knowledge = False

    def close(self) -> None:
        """Settle the active goal and end the session. Idempotent."""
        if self.closed:
            return
        completed = False
        if self._transcript:
            completed = estimate_completion(
                self.planner, self._context(), self.current_goal) >= 0.5
        self._finish_goal(completed=completed)
        self.closed = True
