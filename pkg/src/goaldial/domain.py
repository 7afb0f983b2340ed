"""Core dialog vocabulary: dialog types, goals, utterances, seeker profiles,
and task templates. Everything here is an immutable value; operations return
new objects, so instances are safe to share."""

from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import OutcomeConflictError, SequenceExhaustedError


class DialogType(Enum):
    QA = "qa"
    CHITCHAT = "chitchat"
    RECOMMENDATION = "recommendation"
    TASK = "task"

    @property
    def token(self) -> str:
        return f"<{self.value}>"


class Speaker(Enum):
    SEEKER = "seeker"
    RECOMMENDER = "recommender"


@dataclass(frozen=True)
class Goal:
    """One step of the conversation plan: what kind of exchange, about what."""

    dialog_type: DialogType
    topic: str
    description: str = ""

    def __post_init__(self):
        if not self.topic:
            raise ValueError("goal topic must be non-empty")

    def to_dict(self) -> dict:
        return {"type": self.dialog_type.value, "topic": self.topic,
                "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "Goal":
        return cls(DialogType(d["type"]), d["topic"], d.get("description", ""))


@dataclass(frozen=True)
class GoalSequence:
    """Ordered plan with a cursor; goals before the cursor are history."""

    goals: tuple[Goal, ...]
    cursor: int = 0

    def __post_init__(self):
        if len(self.goals) < 1:
            raise ValueError("goal sequence must contain at least one goal")
        if not 0 <= self.cursor <= len(self.goals):
            raise ValueError(f"cursor {self.cursor} outside [0, {len(self.goals)}]")

    def __len__(self) -> int:
        return len(self.goals)

    @property
    def history(self) -> tuple[Goal, ...]:
        return self.goals[:self.cursor]

    @property
    def current(self) -> Goal | None:
        if self.cursor >= len(self.goals):
            return None
        return self.goals[self.cursor]

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.goals)


def advance_goal(seq: GoalSequence) -> GoalSequence:
    """Move the cursor past the current goal. Raises once the plan is spent."""
    if seq.exhausted:
        raise SequenceExhaustedError(
            f"cursor already at end ({seq.cursor} of {len(seq)})")
    return replace(seq, cursor=seq.cursor + 1)


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    text: str
    goal_index: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("utterance text must be non-empty")
        if self.goal_index < 0:
            raise ValueError("goal_index must be >= 0")

    def to_dict(self) -> dict:
        return {"speaker": self.speaker.value, "text": self.text,
                "goal_index": self.goal_index}

    @classmethod
    def from_dict(cls, d: dict) -> "Utterance":
        return cls(Speaker(d["speaker"]), d["text"], d["goal_index"])


@dataclass(frozen=True)
class DialogueContext:
    """The conversation so far plus what the responder may ground on."""

    utterances: tuple[Utterance, ...]
    profile: "SeekerProfile | None" = None
    knowledge: tuple = ()


@dataclass(frozen=True)
class SeekerProfile:
    seeker_id: str
    name: str
    gender: str
    age_range: str
    city: str
    occupation: str
    preferred_domains: tuple[str, ...] = ()
    disliked_domains: tuple[str, ...] = ()
    seed_entities: tuple[str, ...] = ()
    accepted_entities: tuple[str, ...] = ()
    rejected_entities: tuple[str, ...] = ()

    def __post_init__(self):
        if set(self.preferred_domains) & set(self.disliked_domains):
            raise ValueError("preferred and disliked domains overlap")
        if set(self.accepted_entities) & set(self.rejected_entities):
            raise ValueError("accepted and rejected entities overlap")

    def to_dict(self) -> dict:
        return {
            "seeker_id": self.seeker_id, "name": self.name,
            "gender": self.gender, "age_range": self.age_range,
            "city": self.city, "occupation": self.occupation,
            "preferred_domains": list(self.preferred_domains),
            "disliked_domains": list(self.disliked_domains),
            "seed_entities": list(self.seed_entities),
            "accepted_entities": list(self.accepted_entities),
            "rejected_entities": list(self.rejected_entities),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SeekerProfile":
        return cls(
            d["seeker_id"], d["name"], d["gender"], d["age_range"], d["city"],
            d["occupation"],
            tuple(d.get("preferred_domains", ())),
            tuple(d.get("disliked_domains", ())),
            tuple(d.get("seed_entities", ())),
            tuple(d.get("accepted_entities", ())),
            tuple(d.get("rejected_entities", ())),
        )


def update_profile(profile: SeekerProfile,
                   outcomes: list[tuple[str, str]]) -> SeekerProfile:
    """Fold accept/reject outcomes into the profile.

    An entity switching verdicts leaves its old list, so the disjointness
    invariant holds by construction. One batch naming the same entity on
    both sides is a conflict, not data.
    """
    verdicts: dict[str, str] = {}
    for entity, verdict in outcomes:
        if verdict not in ("accepted", "rejected"):
            raise ValueError(f"unknown outcome verdict: {verdict!r}")
        if entity in verdicts and verdicts[entity] != verdict:
            raise OutcomeConflictError(
                f"entity {entity!r} both accepted and rejected in one batch")
        verdicts[entity] = verdict
    accepted = [e for e in profile.accepted_entities
                if verdicts.get(e) != "rejected"]
    rejected = [e for e in profile.rejected_entities
                if verdicts.get(e) != "accepted"]
    for entity, verdict in verdicts.items():
        target = accepted if verdict == "accepted" else rejected
        if entity not in target:
            target.append(entity)
    return replace(profile, accepted_entities=tuple(accepted),
                   rejected_entities=tuple(rejected))


@dataclass(frozen=True)
class TaskTemplate:
    """A goal sequence plus who opens each goal; the raw material a dialog
    (simulated or live) is built from."""

    name: str
    goal_sequence: GoalSequence
    initiators: tuple[Speaker, ...]

    def __post_init__(self):
        goals = self.goal_sequence.goals
        if len(self.initiators) != len(goals):
            raise ValueError("one initiator per goal required")
        if goals[-1].dialog_type is not DialogType.RECOMMENDATION:
            raise ValueError("final goal must be a recommendation")


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_goal_sequence(seq: GoalSequence, graph,
                           profile: SeekerProfile | None = None) -> ValidationReport:
    """Checks a plan against the graph and profile. Violations are data;
    nothing raises."""
    out: list[str] = []
    for i, goal in enumerate(seq.goals):
        if not graph.has_entity(goal.topic):
            out.append(f"goal {i}: topic {goal.topic!r} not in graph")
    if seq.goals[-1].dialog_type is not DialogType.RECOMMENDATION:
        out.append("final goal not recommendation")
    if profile is not None:
        for i, goal in enumerate(seq.goals):
            if (goal.dialog_type is DialogType.RECOMMENDATION
                    and goal.topic in profile.rejected_entities):
                out.append(f"goal {i}: recommendation topic {goal.topic!r} "
                           "previously rejected")
    for i in range(len(seq.goals) - 1):
        a, b = seq.goals[i].topic, seq.goals[i + 1].topic
        if a == b or not graph.has_entity(a) or not graph.has_entity(b):
            continue
        if b not in graph.neighbors(a, hops=2):
            out.append(f"goals {i}->{i + 1}: no path of length <= 2 "
                       f"between {a!r} and {b!r}")
    return ValidationReport(tuple(out))
