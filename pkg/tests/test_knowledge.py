"""Knowledge graph semantics on small hand-built examples: entity
derivation, neighbor queries, per-turn candidate pools, and disk format."""
import pytest

from goaldial.domain import DialogType, DialogueContext, Goal, Speaker, Utterance
from goaldial.errors import CorpusFormatError, UnknownEntityError
from goaldial.knowledge import (KnowledgeGraph, KnowledgeTriple,
                                candidate_knowledge, load_graph, save_graph)


def _graph():
    # A - B - C chain; "三十" and "南京" stay literals (objects, never
    # subjects, untagged)
    triples = [
        ("甲", "认识", "乙"),
        ("乙", "认识", "丙"),
        ("丙", "住", "南京"),
        ("甲", "年龄", "三十"),
    ]
    return KnowledgeGraph.from_triples(triples)


def test_entity_set_excludes_bare_literals():
    g = _graph()
    assert g.entities() == {"甲", "乙", "丙"}
    assert g.has_entity("乙")
    assert not g.has_entity("三十")


def test_tagged_objects_become_entities():
    g = KnowledgeGraph.from_triples([("甲", "喜欢", "爵士")], {"爵士": "music"})
    assert g.has_entity("爵士")
    assert g.entity_domain("爵士") == "music"
    assert g.entity_domain("甲") is None


def test_neighbors_hops_and_exclusions():
    g = _graph()
    assert g.neighbors("甲") == {"乙"}          # literal edge contributes nothing
    assert g.neighbors("甲", hops=2) == {"乙", "丙"}
    assert g.neighbors("乙") == {"甲", "丙"}
    with pytest.raises(UnknownEntityError):
        g.neighbors("不存在")
    with pytest.raises(ValueError):
        g.neighbors("甲", hops=3)


def test_duplicate_triples_drop_silently_but_count():
    g = KnowledgeGraph.from_triples([("甲", "p", "乙"), ("甲", "p", "乙"),
                                     ("甲", "q", "乙")])
    c = g.counts()
    assert c.triples == 2
    assert c.duplicates_dropped == 1
    assert c.attributes == 2


def test_triples_about_preserves_insertion_order():
    g = _graph()
    about = g.triples_about("甲")
    assert [t.predicate for t in about] == ["认识", "年龄"]
    assert g.triples_about("三十") == []
    assert about[0].as_list() == ["甲", "认识", "乙"]


def test_mentioned_entities_is_substring_match():
    g = _graph()
    assert g.mentioned_entities("我昨天见到甲和丙了") == {"甲", "丙"}
    assert g.mentioned_entities("没有人") == set()


def _ctx(*texts):
    utts = tuple(Utterance(Speaker.SEEKER if i % 2 == 0 else Speaker.RECOMMENDER,
                           t, 0) for i, t in enumerate(texts))
    return DialogueContext(utterances=utts)


def test_candidate_knowledge_priority_tiers():
    triples = [
        ("星", "唱", "歌一"),         # topic triple
        ("星", "生日", "三月"),       # topic triple
        ("歌一", "风格", "爵士"),     # 1-hop neighbor triple
        ("友", "认识", "星"),         # mentioned-entity triple (and 1-hop)
        ("丁", "住", "北京"),         # unrelated
    ]
    g = KnowledgeGraph.from_triples(triples)
    goal = Goal(DialogType.QA, "星")
    ctx = _ctx("丁在哪里住?", "我想聊聊友。")
    got = candidate_knowledge(g, ctx, goal, limit=20)
    # topic first (stable id order), then mentions from the last two turns,
    # then remaining 1-hop neighbor triples
    assert [t.subject for t in got] == ["星", "星", "友", "丁", "歌一"]
    # 丁 was mentioned three turns ago if we add more turns
    got2 = candidate_knowledge(g, _ctx("丁在哪里住?", "好的。", "我想聊聊友。"),
                               goal, limit=20)
    assert all(t.subject != "丁" for t in got2)


def test_candidate_knowledge_limit_and_unknown_topic():
    g = _graph()
    goal = Goal(DialogType.QA, "甲")
    got = candidate_knowledge(g, _ctx(), goal, limit=1)
    assert len(got) == 1 and got[0].subject == "甲"
    # unknown topic contributes nothing; mentions still work
    got2 = candidate_knowledge(g, _ctx("乙呢?"), Goal(DialogType.QA, "没这个"),
                               limit=20)
    assert got2 and all(t.subject == "乙" for t in got2)
    assert candidate_knowledge(g, _ctx(), Goal(DialogType.QA, "没这个")) == []
    with pytest.raises(ValueError):
        candidate_knowledge(g, _ctx(), goal, limit=0)


def test_candidate_knowledge_dedups_across_tiers():
    g = KnowledgeGraph.from_triples([("星", "唱", "歌一"), ("歌一", "属于", "星")])
    goal = Goal(DialogType.QA, "星")
    got = candidate_knowledge(g, _ctx("歌一不错"), goal, limit=20)
    keys = [(t.subject, t.predicate, t.object) for t in got]
    assert len(keys) == len(set(keys)) == 2


def test_graph_save_load_roundtrip(tmp_path):
    g = KnowledgeGraph.from_triples(
        [("甲", "认识", "乙"), ("乙", "喜欢", "爵士")], {"爵士": "music"})
    gp, tp = tmp_path / "graph.jsonl", tmp_path / "tags.json"
    save_graph(g, gp, tp)
    h = load_graph(gp, tp)
    assert h.triples == g.triples
    assert h.entities() == g.entities()
    assert h.entity_domain("爵士") == "music"


def test_load_graph_rejects_malformed_lines(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"s": "a", "p": "b"}\n', encoding="utf-8")
    with pytest.raises(CorpusFormatError) as ei:
        load_graph(p)
    assert ei.value.line == 1


def test_triple_value_semantics():
    t = KnowledgeTriple("甲", "认识", "乙")
    assert t == KnowledgeTriple("甲", "认识", "乙")
    assert t.object == "乙"
    with pytest.raises(AttributeError):
        t.object = "丙"
