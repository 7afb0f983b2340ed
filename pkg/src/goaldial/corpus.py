"""Corpus ingestion, splits, training examples, and candidate pools.

Canonical format is JSON Lines, one dialog per line:
{"seeker_id", "dialog_index", "profile", "profile_after",
 "goals":[{"type","topic","description"}], "knowledge":[[s,p,o]...],
 "turns":[{"speaker","text","goal_index", optional "gold_knowledge"}]}.
An adapter accepts the public release layout (goal string, user_profile
dict, conversation list) well enough to count and to train on.
"""

import json
import random
import re
from dataclasses import dataclass, replace

from .domain import (DialogType, DialogueContext, Goal, GoalSequence,
                     SeekerProfile, Speaker, Utterance)
from .errors import (CorpusFormatError, InsufficientDistractorsError,
                     SplitError)
from .knowledge import KnowledgeGraph, KnowledgeTriple


@dataclass(frozen=True)
class DialogRecord:
    seeker_id: str
    dialog_index: int
    profile: SeekerProfile
    profile_after: SeekerProfile
    goals: tuple[Goal, ...]
    knowledge: tuple[KnowledgeTriple, ...]
    turns: tuple[Utterance, ...]
    # per-turn ground-truth triples, parallel to turns; () means none recorded
    turn_gold: tuple[tuple[KnowledgeTriple, ...], ...] = ()

    def __post_init__(self):
        prev = 0
        for i, turn in enumerate(self.turns):
            if turn.goal_index >= len(self.goals):
                raise ValueError(f"turn {i}: goal_index {turn.goal_index} "
                                 f"out of range ({len(self.goals)} goals)")
            if turn.goal_index < prev:
                raise ValueError(f"turn {i}: goal_index decreases")
            prev = turn.goal_index
        if self.turn_gold and len(self.turn_gold) != len(self.turns):
            raise ValueError("turn_gold must parallel turns")

    def gold_for_turn(self, i: int) -> tuple[KnowledgeTriple, ...]:
        return self.turn_gold[i] if self.turn_gold else ()

    def to_dict(self) -> dict:
        turns = []
        for i, u in enumerate(self.turns):
            d = u.to_dict()
            gold = self.gold_for_turn(i)
            if gold:
                d["gold_knowledge"] = [t.as_list() for t in gold]
            turns.append(d)
        return {
            "seeker_id": self.seeker_id,
            "dialog_index": self.dialog_index,
            "profile": self.profile.to_dict(),
            "profile_after": self.profile_after.to_dict(),
            "goals": [g.to_dict() for g in self.goals],
            "knowledge": [t.as_list() for t in self.knowledge],
            "turns": turns,
        }


@dataclass(frozen=True)
class TrainingExample:
    """One supervised target: the strict context before a recommender turn,
    the turn itself, its goal, and the dialog's knowledge pool. goal=None
    is the goal-ablated condition; knowledge=() the knowledge-ablated one."""

    context: DialogueContext
    response: Utterance
    goal: Goal | None
    goal_history: tuple[Goal, ...]
    knowledge: tuple[KnowledgeTriple, ...]
    profile: SeekerProfile
    gold_knowledge: tuple[KnowledgeTriple, ...] = ()

    def __post_init__(self):
        if self.response.speaker is not Speaker.RECOMMENDER:
            raise ValueError("response must be a recommender turn")
        if not self.context.utterances:
            raise ValueError("context must be non-empty")


@dataclass(frozen=True)
class CandidatePool:
    """Gold response hidden among nine training-set distractors."""

    candidates: tuple[str, ...]
    gold_index: int

    def __post_init__(self):
        if len(self.candidates) != 10:
            raise ValueError("pool must hold exactly 10 candidates")
        if not 0 <= self.gold_index < 10:
            raise ValueError("gold_index out of range")

    @property
    def gold(self) -> str:
        return self.candidates[self.gold_index]


def record_from_dict(d: dict, path: str = "<memory>", line: int = 0
                     ) -> DialogRecord:
    try:
        goals = tuple(Goal.from_dict(g) for g in d["goals"])
        turns = []
        gold = []
        for td in d["turns"]:
            turns.append(Utterance.from_dict(td))
            gold.append(tuple(KnowledgeTriple(*row)
                              for row in td.get("gold_knowledge", ())))
        return DialogRecord(
            seeker_id=d["seeker_id"],
            dialog_index=d["dialog_index"],
            profile=SeekerProfile.from_dict(d["profile"]),
            profile_after=SeekerProfile.from_dict(d["profile_after"]),
            goals=goals,
            knowledge=tuple(KnowledgeTriple(*row) for row in d["knowledge"]),
            turns=tuple(turns),
            turn_gold=tuple(gold) if any(gold) else (),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"bad dialog record: {exc}", path=path,
                                line=line) from exc


def load_corpus(path) -> list[DialogRecord]:
    """Reads canonical JSONL; returns records grouped by seeker, ordered by
    dialog_index within each seeker (first-appearance seeker order)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                d = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc}",
                                        path=str(path), line=lineno) from exc
            records.append(record_from_dict(d, str(path), lineno))
    order: dict[str, int] = {}
    for r in records:
        order.setdefault(r.seeker_id, len(order))
    records.sort(key=lambda r: (order[r.seeker_id], r.dialog_index))
    return records


def save_corpus(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


def split_by_seeker(records, ratios=(0.65, 0.10, 0.25), seed: int = 0
                    ) -> dict[str, list[DialogRecord]]:
    """Seeker-level split: floor dev and test seeker counts, remainder to
    train. Every seeker's dialogs land in exactly one split."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    seekers = sorted({r.seeker_id for r in records})
    n = len(seekers)
    if n < 3:
        raise SplitError(f"need at least 3 seekers to fill 3 splits, got {n}")
    n_dev = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_dev - n_test
    if min(n_train, n_dev, n_test) == 0:
        raise SplitError(
            f"split of {n} seekers at {ratios} leaves an empty part "
            f"(train={n_train}, dev={n_dev}, test={n_test})")
    rng = random.Random(seed)
    rng.shuffle(seekers)
    assign = {}
    for s in seekers[:n_train]:
        assign[s] = "train"
    for s in seekers[n_train:n_train + n_dev]:
        assign[s] = "dev"
    for s in seekers[n_train + n_dev:]:
        assign[s] = "test"
    out: dict[str, list[DialogRecord]] = {"train": [], "dev": [], "test": []}
    for r in records:
        out[assign[r.seeker_id]].append(r)
    return out


def extract_training_examples(record: DialogRecord) -> list[TrainingExample]:
    """One example per recommender turn that has preceding context."""
    out = []
    for i, turn in enumerate(record.turns):
        if turn.speaker is not Speaker.RECOMMENDER or i == 0:
            continue
        goal = record.goals[turn.goal_index]
        out.append(TrainingExample(
            context=DialogueContext(
                utterances=record.turns[:i],
                profile=record.profile,
                knowledge=record.knowledge),
            response=turn,
            goal=goal,
            goal_history=record.goals[:turn.goal_index],
            knowledge=record.knowledge,
            profile=record.profile,
            gold_knowledge=record.gold_for_turn(i),
        ))
    return out


def build_candidate_pool(example: TrainingExample, train_responses,
                         seed: int = 0) -> CandidatePool:
    """Gold plus nine distinct training responses, shuffled under seed."""
    gold = example.response.text
    distinct = sorted(set(train_responses) - {gold})
    if len(distinct) < 9:
        raise InsufficientDistractorsError(
            f"need 9 distractors distinct from gold, have {len(distinct)}")
    rng = random.Random(seed)
    cands = rng.sample(distinct, 9) + [gold]
    rng.shuffle(cands)
    return CandidatePool(tuple(cands), cands.index(gold))


def ablate(example: TrainingExample, drop_goal: bool = False,
           drop_knowledge: bool = False) -> TrainingExample:
    """Goal becomes the unknown marker, knowledge the empty pool; everything
    else is untouched."""
    ex = example
    if drop_goal:
        ex = replace(ex, goal=None, goal_history=())
    if drop_knowledge:
        ex = replace(ex, knowledge=(), gold_knowledge=ex.gold_knowledge)
    return ex


def corpus_stats(records) -> dict:
    seekers = {r.seeker_id for r in records}
    n_turns = sum(len(r.turns) for r in records)
    sub = {t.value: 0 for t in DialogType}
    for r in records:
        for g in r.goals:
            sub[g.dialog_type.value] += 1
    return {
        "dialogs": len(records),
        "utterances": n_turns,
        "seekers": len(seekers),
        "sub_dialogs": sub,
        "avg_turns_per_dialog": round(n_turns / len(records), 2) if records else 0.0,
    }


_RELEASE_GOAL = re.compile(r"\[(\d+)\]\s*([^([\n]+?)\s*[((](.*?)[))]")


def _release_goal_type(label: str) -> DialogType:
    label = label.strip()
    if "推荐" in label:
        return DialogType.RECOMMENDATION
    if "问答" in label or "QA" in label.upper():
        return DialogType.QA
    if "点播" in label or "天气" in label or "任务" in label:
        return DialogType.TASK
    return DialogType.CHITCHAT


def load_release_corpus(paths) -> tuple[list[DialogRecord], dict]:
    """Adapter for the public release layout: one JSON object per line with
    "goal" (numbered plan string), "user_profile", "conversation", and
    "knowledge" ([s,p,o] lists). Returns (records, counts). Parsing of goal
    strings is best-effort; unparseable plans fall back to one chitchat goal
    so counting still works."""
    records: list[DialogRecord] = []
    n_utts = 0
    seekers: dict[str, str] = {}
    per_seeker_count: dict[str, int] = {}
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    d = json.loads(raw)
                    conv = d.get("conversation") or []
                    prof = d.get("user_profile") or {}
                    name = str(prof.get("姓名") or prof.get("name")
                               or json.dumps(prof, sort_keys=True,
                                             ensure_ascii=False))
                    sid = seekers.setdefault(name, f"seeker_{len(seekers):05d}")
                    goals = []
                    for m in _RELEASE_GOAL.finditer(d.get("goal", "")):
                        topic = m.group(3).strip() or "unknown"
                        goals.append(Goal(_release_goal_type(m.group(2)),
                                          topic, m.group(2).strip()))
                    if not goals:
                        goals = [Goal(DialogType.CHITCHAT, "unknown")]
                    turns = []
                    for j, text in enumerate(conv):
                        text = re.sub(r"^\[\d+\]\s*", "", str(text)).strip()
                        if not text:
                            text = "..."
                        speaker = (Speaker.SEEKER if j % 2 == 0
                                   else Speaker.RECOMMENDER)
                        turns.append(Utterance(speaker, text,
                                               min(j * len(goals) // max(len(conv), 1),
                                                   len(goals) - 1)))
                    know = tuple(KnowledgeTriple(str(s) or "-", str(p) or "-",
                                                 str(o) or "-")
                                 for s, p, o in (row for row in
                                                 d.get("knowledge", []) if
                                                 isinstance(row, list) and len(row) == 3))
                    profile = SeekerProfile(
                        seeker_id=sid, name=name,
                        gender=str(prof.get("性别", "")),
                        age_range=str(prof.get("年龄区间", prof.get("年龄段", ""))),
                        city=str(prof.get("居住地", "")),
                        occupation=str(prof.get("职业", "")))
                    idx = per_seeker_count.get(sid, 0)
                    per_seeker_count[sid] = idx + 1
                    records.append(DialogRecord(
                        seeker_id=sid, dialog_index=idx, profile=profile,
                        profile_after=profile, goals=tuple(goals),
                        knowledge=know, turns=tuple(turns)))
                    n_utts += len(turns)
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorpusFormatError(f"bad release record: {exc}",
                                            path=str(path), line=lineno) from exc
    counts = {"dialogs": len(records), "utterances": n_utts,
              "seekers": len(seekers)}
    return records, counts
