"""Dialog-domain value objects: goal plans, profiles, templates, and the
plan validator."""
import pytest

from goaldial.domain import (DialogType, Goal, GoalSequence, SeekerProfile,
                             Speaker, TaskTemplate, Utterance, advance_goal,
                             update_profile, validate_goal_sequence)
from goaldial.errors import OutcomeConflictError, SequenceExhaustedError
from goaldial.knowledge import KnowledgeGraph


def _profile(**kw):
    base = dict(seeker_id="s1", name="小李", gender="female", age_range="26-35",
                city="上海", occupation="engineer")
    base.update(kw)
    return SeekerProfile(**base)


def _chain_graph():
    # singer - song - genre - sibling genre, one extra tagged leaf
    triples = [
        ("歌手甲", "代表作", "歌曲一"),
        ("歌曲一", "风格", "爵士"),
        ("爵士", "相关", "蓝调"),
        ("蓝调", "相关", "摇滚"),
    ]
    return KnowledgeGraph.from_triples(triples, {"摇滚": "music"})


def test_goal_requires_topic_and_roundtrips():
    with pytest.raises(ValueError):
        Goal(DialogType.QA, "")
    g = Goal(DialogType.RECOMMENDATION, "歌曲一", "push the new single")
    assert Goal.from_dict(g.to_dict()) == g
    assert g.dialog_type.token == "<recommendation>"


def test_goal_sequence_cursor_rules():
    goals = (Goal(DialogType.QA, "a"), Goal(DialogType.RECOMMENDATION, "b"))
    seq = GoalSequence(goals)
    assert seq.current == goals[0]
    assert seq.history == ()
    assert not seq.exhausted
    seq2 = advance_goal(seq)
    assert seq2.current == goals[1]
    assert seq2.history == (goals[0],)
    assert seq.cursor == 0  # original untouched
    seq3 = advance_goal(seq2)
    assert seq3.exhausted and seq3.current is None
    with pytest.raises(SequenceExhaustedError):
        advance_goal(seq3)
    with pytest.raises(ValueError):
        GoalSequence(())
    with pytest.raises(ValueError):
        GoalSequence(goals, cursor=3)


def test_utterance_validation_and_roundtrip():
    with pytest.raises(ValueError):
        Utterance(Speaker.SEEKER, "", 0)
    with pytest.raises(ValueError):
        Utterance(Speaker.SEEKER, "hi", -1)
    u = Utterance(Speaker.RECOMMENDER, "你好", 2)
    assert Utterance.from_dict(u.to_dict()) == u


def test_profile_disjointness_enforced():
    with pytest.raises(ValueError):
        _profile(preferred_domains=("music",), disliked_domains=("music",))
    with pytest.raises(ValueError):
        _profile(accepted_entities=("x",), rejected_entities=("x",))
    p = _profile(preferred_domains=("music",), seed_entities=("甲",))
    assert SeekerProfile.from_dict(p.to_dict()) == p


def test_update_profile_moves_entities_between_lists():
    p = _profile(accepted_entities=("甲",), rejected_entities=("乙",))
    q = update_profile(p, [("甲", "rejected"), ("乙", "accepted"), ("丙", "accepted")])
    assert q.accepted_entities == ("乙", "丙")
    assert q.rejected_entities == ("甲",)
    # input object unchanged
    assert p.accepted_entities == ("甲",)
    # disjointness holds by construction
    assert not set(q.accepted_entities) & set(q.rejected_entities)


def test_update_profile_rejects_conflicts_and_unknown_verdicts():
    p = _profile()
    with pytest.raises(OutcomeConflictError):
        update_profile(p, [("甲", "accepted"), ("甲", "rejected")])
    with pytest.raises(ValueError):
        update_profile(p, [("甲", "maybe")])
    # repeating the same verdict is idempotent, not a conflict
    q = update_profile(p, [("甲", "accepted"), ("甲", "accepted")])
    assert q.accepted_entities == ("甲",)


def test_task_template_shape_rules():
    goals = GoalSequence((Goal(DialogType.QA, "a"),
                          Goal(DialogType.RECOMMENDATION, "b")))
    t = TaskTemplate("t", goals, (Speaker.SEEKER, Speaker.RECOMMENDER))
    assert t.name == "t"
    with pytest.raises(ValueError):
        TaskTemplate("t", goals, (Speaker.SEEKER,))
    bad = GoalSequence((Goal(DialogType.RECOMMENDATION, "b"),
                        Goal(DialogType.CHITCHAT, "a")))
    with pytest.raises(ValueError):
        TaskTemplate("t", bad, (Speaker.SEEKER, Speaker.SEEKER))


def test_validate_goal_sequence_accepts_connected_plan():
    graph = _chain_graph()
    seq = GoalSequence((
        Goal(DialogType.QA, "歌手甲"),
        Goal(DialogType.CHITCHAT, "歌手甲"),
        Goal(DialogType.RECOMMENDATION, "歌曲一"),
    ))
    report = validate_goal_sequence(seq, graph)
    assert report.ok, report.violations


def test_validate_goal_sequence_flags_problems():
    graph = _chain_graph()
    seq = GoalSequence((
        Goal(DialogType.QA, "不存在"),
        Goal(DialogType.CHITCHAT, "歌手甲"),
        Goal(DialogType.RECOMMENDATION, "蓝调"),  # 3 hops from 歌手甲
    ))
    report = validate_goal_sequence(
        seq, graph, profile=_profile(rejected_entities=("蓝调",)))
    text = "\n".join(report.violations)
    assert not report.ok
    assert "不存在" in text
    assert "previously rejected" in text
    assert "no path" in text


def test_validate_goal_sequence_requires_final_recommendation():
    graph = _chain_graph()
    seq = GoalSequence((Goal(DialogType.QA, "歌手甲"),
                        Goal(DialogType.CHITCHAT, "歌曲一")))
    report = validate_goal_sequence(seq, graph)
    assert "final goal not recommendation" in report.violations
