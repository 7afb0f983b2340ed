"""Knowledge graph: load, index, and query grounding triples.

An object string names an entity iff it also appears as a subject or is
listed in the optional tag file; every other object is a literal value.
Traversal runs over entity-valued edges and treats them as undirected.
"""

import json
from dataclasses import dataclass

from .errors import CorpusFormatError, UnknownEntityError
from .tokenizer import tokenize


@dataclass(frozen=True)
class KnowledgeTriple:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        if not (self.subject and self.predicate and self.object):
            raise ValueError("triple fields must all be non-empty")

    def as_list(self) -> list[str]:
        return [self.subject, self.predicate, self.object]


def linearize(triple: KnowledgeTriple) -> list[str]:
    """Token sequence "subject predicate object" under the corpus tokenizer."""
    return tokenize(f"{triple.subject} {triple.predicate} {triple.object}")


@dataclass(frozen=True)
class GraphCounts:
    entities: int
    attributes: int
    triples: int
    duplicates_dropped: int = 0


class KnowledgeGraph:
    """Immutable after construction; queries are read-only."""

    def __init__(self, triples: list[KnowledgeTriple],
                 entity_tags: dict[str, str] | None = None,
                 duplicates_dropped: int = 0):
        self.triples: tuple[KnowledgeTriple, ...] = tuple(triples)
        self._tags = dict(entity_tags or {})
        self._dups = duplicates_dropped
        subjects = {t.subject for t in self.triples}
        self._entities = set(subjects) | set(self._tags)
        for t in self.triples:
            if t.object in subjects or t.object in self._tags:
                self._entities.add(t.object)
        self._by_subject: dict[str, list[int]] = {}
        self._edges: dict[str, set[str]] = {}
        for i, t in enumerate(self.triples):
            self._by_subject.setdefault(t.subject, []).append(i)
            if t.object in self._entities:
                self._edges.setdefault(t.subject, set()).add(t.object)
                self._edges.setdefault(t.object, set()).add(t.subject)

    @classmethod
    def from_triples(cls, rows, entity_tags: dict[str, str] | None = None
                     ) -> "KnowledgeGraph":
        """rows: iterable of (s, p, o) or KnowledgeTriple; dedups silently."""
        seen = set()
        out = []
        dups = 0
        for row in rows:
            t = row if isinstance(row, KnowledgeTriple) else KnowledgeTriple(*row)
            key = (t.subject, t.predicate, t.object)
            if key in seen:
                dups += 1
                continue
            seen.add(key)
            out.append(t)
        return cls(out, entity_tags, dups)

    def counts(self) -> GraphCounts:
        return GraphCounts(
            entities=len(self._entities),
            attributes=len({t.predicate for t in self.triples}),
            triples=len(self.triples),
            duplicates_dropped=self._dups,
        )

    def has_entity(self, entity: str) -> bool:
        return entity in self._entities

    def entities(self) -> set[str]:
        return set(self._entities)

    def entity_domain(self, entity: str) -> str | None:
        return self._tags.get(entity)

    def triples_about(self, entity: str) -> list[KnowledgeTriple]:
        return [self.triples[i] for i in self._by_subject.get(entity, ())]

    def neighbors(self, entity: str, hops: int = 1) -> set[str]:
        """Entities within `hops` undirected edges, seed excluded."""
        if hops not in (1, 2):
            raise ValueError("hops must be 1 or 2")
        if entity not in self._entities:
            raise UnknownEntityError(f"unknown entity: {entity!r}")
        frontier = {entity}
        seen = {entity}
        for _ in range(hops):
            frontier = {n for e in frontier for n in self._edges.get(e, ())} - seen
            seen |= frontier
        return seen - {entity}

    def mentioned_entities(self, text: str) -> set[str]:
        """Exact-substring mentions of entity ids; no fuzzy linking."""
        return {e for e in self._entities if e in text}


def candidate_knowledge(graph: KnowledgeGraph, context, goal,
                        limit: int = 20) -> list[KnowledgeTriple]:
    """Per-turn knowledge pool the responders attend over.

    Priority tiers: triples about the goal topic, then about entities
    mentioned in the last two utterances, then about 1-hop neighbors of the
    topic. Order is (tier, stable triple id), truncated to limit. An unknown
    topic simply contributes nothing.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    index = {t: i for i, t in enumerate(graph.triples)}
    tiers: list[list[KnowledgeTriple]] = [[], [], []]
    topic = goal.topic if goal is not None else None
    if topic and graph.has_entity(topic):
        tiers[0] = graph.triples_about(topic)
        for n in sorted(graph.neighbors(topic, hops=1)):
            tiers[2].extend(graph.triples_about(n))
    recent = [u.text for u in context.utterances[-2:]] if context else []
    mentioned = set()
    for text in recent:
        mentioned |= graph.mentioned_entities(text)
    for e in sorted(mentioned):
        tiers[1].extend(graph.triples_about(e))
    out: list[KnowledgeTriple] = []
    seen: set[int] = set()
    for tier in tiers:
        for t in sorted(tier, key=index.__getitem__):
            if index[t] in seen:
                continue
            seen.add(index[t])
            out.append(t)
            if len(out) >= limit:
                return out
    return out


def load_graph(path, tags_path=None) -> KnowledgeGraph:
    """UTF-8 JSON Lines, one {"s","p","o"} per line; optional JSON tag file
    mapping entity id -> domain. Duplicate triples drop silently (counted)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                rows.append((rec["s"], rec["p"], rec["o"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"bad triple record: {exc}",
                                        path=str(path), line=lineno) from exc
    tags = None
    if tags_path is not None:
        with open(tags_path, encoding="utf-8") as fh:
            tags = json.load(fh)
    return KnowledgeGraph.from_triples(rows, tags)


def save_graph(graph: KnowledgeGraph, path, tags_path=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in graph.triples:
            fh.write(json.dumps({"s": t.subject, "p": t.predicate,
                                 "o": t.object}, ensure_ascii=False) + "\n")
    if tags_path is not None:
        with open(tags_path, "w", encoding="utf-8") as fh:
            json.dump(graph._tags, fh, ensure_ascii=False, indent=0,
                      sort_keys=True)
