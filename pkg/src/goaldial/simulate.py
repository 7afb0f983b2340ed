"""Scripted seeker and rollout driver.

The seeker is rule-based and deterministic under its seed: it opens on one
of its profile's seed entities, asks or chats in the same surface forms the
corpus uses, reacts to recommendations by profile (rejected entities are
refused, everything else is mostly accepted), and falls back to short
acknowledgements when the goal has not moved. It reads the session's active
goal directly; that white-box shortcut keeps the rules tiny and makes
rollouts reproducible.

A rollout ends when the seeker accepts a recommendation or the session hits
its turn cap; either way the session closes and every goal gets an outcome
event.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .domain import DialogType, Goal, SeekerProfile, Speaker, Utterance
from .knowledge import KnowledgeGraph
from .session import GoalEvent, Session, TurnResult

__all__ = ["Rollout", "ScriptedSeeker", "run_simulated_dialog"]

_ACK = "原来是这样,又学到了。"
_FILLER = "嗯嗯,你接着说。"
_ACCEPT = "好的,听起来很棒,我很喜欢。"
_ACCEPT_ALT = "听起来不错,我就选这个了。"
_REJECT = "这个一般,我想换一个试试。"


@dataclass(frozen=True)
class Rollout:
    session_id: str
    transcript: tuple[Utterance, ...]
    goal_events: tuple[GoalEvent, ...]
    results: tuple[TurnResult, ...]
    ended_by: str  # "accept" or "cap"

    @property
    def n_turns(self) -> int:
        return len(self.transcript)


class ScriptedSeeker:
    def __init__(self, profile: SeekerProfile, graph: KnowledgeGraph,
                 seed: int = 0):
        self.profile = profile
        self.graph = graph
        self.rng = random.Random(seed)
        self._spoken_for: object = None
        self._rejected_once = False
        self.accepted: str | None = None

    def opening_goal(self) -> Goal:
        """QA or chitchat about a seed entity the graph knows."""
        topics = [e for e in self.profile.seed_entities
                  if self.graph.has_entity(e)]
        if not topics:
            topics = sorted(self.graph.entities())[:1]
        dtype = self.rng.choice((DialogType.QA, DialogType.CHITCHAT))
        return Goal(dtype, topics[0], "")

    def _goal_key(self, session: Session):
        return (len(session.goals), session.current_goal.dialog_type,
                session.current_goal.topic)

    @staticmethod
    def _stalled(session: Session) -> bool:
        replies = [u.text for u in session.transcript
                   if u.speaker is Speaker.RECOMMENDER]
        return len(replies) >= 2 and replies[-1] == replies[-2]

    def _probe(self, topic: str) -> str | None:
        triples = self.graph.triples_about(topic)
        if not triples:
            return None
        t = self.rng.choice(triples)
        return f"你知道{topic}的{t.predicate}是什么吗?"

    def line(self, session: Session) -> tuple[str, bool]:
        """The next seeker utterance and whether it settles the dialog."""
        goal = session.current_goal
        key = self._goal_key(session)
        fresh = key != self._spoken_for
        self._spoken_for = key
        if fresh:
            self._rejected_once = False
        if goal.dialog_type is DialogType.RECOMMENDATION:
            return self._react_to_recommendation(session)
        topic = goal.topic
        if not fresh:
            # a repeating recommender gets a concrete question instead of
            # another backchannel, so the exchange can move
            if self._stalled(session):
                probe = self._probe(topic)
                if probe is not None:
                    return probe, False
            return (_ACK if goal.dialog_type is not DialogType.TASK
                    else _FILLER), False
        if goal.dialog_type is DialogType.QA:
            probe = self._probe(topic)
            if probe is not None:
                return probe, False
            return f"我最近对{topic}很感兴趣,你觉得怎么样?", False
        if goal.dialog_type is DialogType.TASK:
            star = self.profile.seed_entities[0] \
                if self.profile.seed_entities else topic
            return f"帮我放一首{star}的歌吧。", False
        return f"我最近对{topic}很感兴趣,你觉得怎么样?", False

    def _react_to_recommendation(self, session: Session) -> tuple[str, bool]:
        topic = session.current_goal.topic
        refuse = topic in self.profile.rejected_entities
        if self._rejected_once:
            # the second proposal under one goal is taken on faith
            self.accepted = topic
            return _ACCEPT_ALT, True
        if refuse or self.rng.random() < 0.2:
            self._rejected_once = True
            return _REJECT, False
        self.accepted = topic
        return _ACCEPT, True


def run_simulated_dialog(planner, responder, graph: KnowledgeGraph,
                         profile: SeekerProfile,
                         opening: Goal | None = None, seed: int = 0,
                         max_turns: int = 40) -> Rollout:
    """Drive one full conversation between the scripted seeker and a
    planner+responder stack. Deterministic for a fixed seed."""
    seeker = ScriptedSeeker(profile, graph, seed=seed)
    goal = opening if opening is not None else seeker.opening_goal()
    session = Session(planner, responder, graph, profile, goal,
                      max_turns=max_turns)
    if goal.dialog_type is DialogType.RECOMMENDATION:
        session.open()
    ended_by = "cap"
    while not session.closed:
        text, settled = seeker.line(session)
        session.message(text)
        if settled:
            ended_by = "accept"
            break
    session.close()
    return Rollout(session_id=session.session_id,
                   transcript=session.transcript,
                   goal_events=session.goal_events,
                   results=session.results,
                   ended_by=ended_by)
