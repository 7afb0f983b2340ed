"""Goal planning: decide when the active goal is complete and what comes next.

A single convolutional text encoder reads the recent context, the active
goal, and the seeker profile as one token stream. Three heads share it:

* completion: probability the active goal is finished (binary),
* type: which of the four dialog types the next goal has,
* topic: a distribution over a dynamic candidate-entity list, scored by a
  dot product between the encoded state and an encoding of each candidate
  (a fixed-vocabulary softmax head is available as ``topic_mode="fixed"``).

The planner switches goals only when the completion probability reaches
0.5; below that it keeps the previous goal verbatim. Training labels come
from goal-index transitions between consecutive recommender turns, which is
exactly the information a deployed session has: goals may advance on seeker
turns, and the planner must detect that from the context alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .corpus import DialogRecord
from .domain import DialogType, DialogueContext, Goal, SeekerProfile, Speaker
from .errors import MissingGoalError, NoCandidateTopicsError
from .knowledge import KnowledgeGraph
from .neural.layers import ConvMaxPool, Embedding, Linear, MLP, softmax
from .neural.losses import binary_cross_entropy, cross_entropy
from .neural.optim import Adam, clip_global_norm
from .neural.params import ParamStore
from .neural.snapshot import load_params, peek_meta, save_params
from .tokenizer import (RECOMMENDER_TOK, SEEKER_TOK, SEP, Vocab, tokenize)

__all__ = [
    "PlannerConfig",
    "PlannerModel",
    "PlannerDecision",
    "PlannerExample",
    "planner_examples",
    "candidate_topics",
    "estimate_completion",
    "predict_goal",
    "plan_next",
    "train_planner",
    "evaluate_planner",
]

_TYPES = tuple(DialogType)


@dataclass
class PlannerConfig:
    emb: int = 48
    filters: int = 32
    widths: tuple = (2, 3)
    head_hidden: int = 64
    topic_dim: int = 48
    context_tokens: int = 96
    topic_mode: str = "dynamic"
    lr: float = 2e-3
    batch_size: int = 32
    epochs: int = 12
    clip: float = 5.0
    seed: int = 0

    @classmethod
    def paper(cls) -> "PlannerConfig":
        """Full-scale settings: 256-wide embeddings and hidden layers,
        batch 128, learning rate 0.002."""
        return cls(emb=256, filters=256, widths=(2, 3, 4), head_hidden=256,
                   topic_dim=256, context_tokens=256, batch_size=128,
                   lr=2e-3, epochs=30)


@dataclass(frozen=True)
class PlannerExample:
    """One planning step: everything visible before a recommender turn."""

    context: DialogueContext
    last_goal: Goal
    target_goal: Goal
    completed: int
    candidates: tuple[str, ...]
    topic_index: int


@dataclass(frozen=True)
class PlannerDecision:
    goal: Goal
    completion_prob: float
    changed: bool
    type_probs: np.ndarray
    candidates: tuple[str, ...]
    topic_probs: np.ndarray


def candidate_topics(graph: KnowledgeGraph, profile: SeekerProfile,
                     goal_history, cap: int = 1000) -> tuple[str, ...]:
    """Deterministic candidate next-topic list.

    Seeds and accepted entities plus everything within two hops of the most
    recent topics, minus rejected entities, sorted, capped. With no usable
    history the neighborhoods grow from the profile seeds instead; if the
    result is empty the seeds themselves are the fallback.
    """
    rejected = set(profile.rejected_entities)
    recents: list[str] = []
    for g in reversed(tuple(goal_history)):
        if g.topic not in recents:
            recents.append(g.topic)
        if len(recents) == 2:
            break
    anchors = recents if recents else list(profile.seed_entities)
    pool: set[str] = set(profile.seed_entities) | set(profile.accepted_entities)
    pool.update(recents)
    for a in anchors:
        if graph.has_entity(a):
            pool.update(graph.neighbors(a, hops=2))
    cands = sorted(t for t in pool if t not in rejected)
    if not cands:
        cands = sorted(set(profile.seed_entities))
        if not cands:
            raise NoCandidateTopicsError(
                f"no candidate topics for seeker {profile.seeker_id}")
    return tuple(cands[:cap])


def _profile_tokens(profile: SeekerProfile) -> list[str]:
    toks = tokenize(f"{profile.gender} {profile.age_range} {profile.city} "
                    f"{profile.occupation}")
    for d in profile.preferred_domains:
        toks += ["喜", "欢"] + tokenize(d)
    for e in profile.accepted_entities[-4:]:
        toks += ["接", "受"] + tokenize(e)
    for e in profile.rejected_entities[-4:]:
        toks += ["拒", "绝"] + tokenize(e)
    return toks


def _goal_tokens(goal: Goal) -> list[str]:
    return [goal.dialog_type.token] + tokenize(goal.topic) + \
        tokenize(goal.description)


def _context_tokens(utterances, cap: int) -> list[str]:
    picked: list[list[str]] = []
    used = 0
    for u in reversed(tuple(utterances)):
        tok = SEEKER_TOK if u.speaker is Speaker.SEEKER else RECOMMENDER_TOK
        toks = [tok] + tokenize(u.text)
        picked.append(toks)
        used += len(toks)
        if used >= cap:
            break
    flat: list[str] = []
    for toks in reversed(picked):
        flat.extend(toks)
    return flat[-cap:]


class PlannerModel:
    def __init__(self, config: PlannerConfig, vocab: Vocab,
                 topic_list: tuple[str, ...] = ()):
        self.config = config
        self.vocab = vocab
        self.topic_list = tuple(topic_list)
        self.store = ParamStore(seed=config.seed)
        c = config
        self.emb = Embedding(self.store, "emb", len(vocab), c.emb)
        self.conv = ConvMaxPool(self.store, "conv", c.emb, c.filters,
                                widths=c.widths)
        enc_dim = c.filters * len(c.widths)
        self.comp_head = MLP(self.store, "comp", (enc_dim, c.head_hidden, 1))
        self.type_head = MLP(self.store, "type", (enc_dim, c.head_hidden,
                                                  len(_TYPES)))
        if c.topic_mode == "dynamic":
            self.topic_proj = Linear(self.store, "topic/proj", enc_dim,
                                     c.topic_dim)
            self.ent_proj = Linear(self.store, "topic/ent", c.emb, c.topic_dim)
        elif c.topic_mode == "fixed":
            if not self.topic_list:
                raise ValueError("fixed topic mode needs a topic list")
            self.topic_head = Linear(self.store, "topic/fixed", enc_dim,
                                     len(self.topic_list))
        else:
            raise ValueError(f"unknown topic_mode: {c.topic_mode!r}")

    # -- featurization ----------------------------------------------------

    def _tokens(self, context: DialogueContext, last_goal: Goal) -> list[str]:
        return (_context_tokens(context.utterances, self.config.context_tokens)
                + [SEP] + _goal_tokens(last_goal)
                + [SEP] + _profile_tokens(context.profile))

    def _batch_ids(self, items):
        """items: list of (context, last_goal) -> padded ids and lengths."""
        rows = [self.vocab.encode(self._tokens(ctx, g)) for ctx, g in items]
        lengths = np.array([len(r) for r in rows], dtype=np.int64)
        T = max(int(lengths.max()), max(self.config.widths))
        ids = np.zeros((len(rows), T), dtype=np.int64)
        for i, r in enumerate(rows):
            ids[i, :len(r)] = r
        return ids, lengths

    def _encode(self, ids, lengths):
        x, emb_cache = self.emb.forward(ids)
        enc, conv_cache = self.conv.forward(x, lengths)
        return enc, (emb_cache, conv_cache)

    def _encode_backward(self, denc, cache):
        emb_cache, conv_cache = cache
        dx = self.conv.backward(denc, conv_cache)
        self.emb.backward(dx, emb_cache)

    def _entity_vectors(self, topics):
        """Mean token embedding per topic, projected. Returns vectors,
        plus a cache for backward."""
        rows = [self.vocab.encode(tokenize(t)) or [self.vocab.unk_id]
                for t in topics]
        means = np.stack([self.emb.table.value[r].mean(axis=0) for r in rows])
        a, pc = self.ent_proj.forward(means)
        vecs = np.tanh(a)
        return vecs, (rows, pc, vecs)

    def _entity_backward(self, dvecs, cache):
        rows, pc, vecs = cache
        dmeans = self.ent_proj.backward(dvecs * (1.0 - vecs * vecs), pc)
        for r, dm in zip(rows, dmeans):
            self.emb.table.grad[r] += dm / len(r)

    # -- persistence -------------------------------------------------------

    def save(self, path):
        meta = {
            "kind": "planner",
            "config": dataclasses.asdict(self.config),
            "vocab": self.vocab.to_json(),
            "topic_list": list(self.topic_list),
        }
        save_params(path, self.store, meta)

    @classmethod
    def load(cls, path) -> "PlannerModel":
        meta = peek_meta(path)
        if meta.get("kind") != "planner":
            raise ValueError(f"{path} holds a {meta.get('kind')!r} snapshot")
        cfg = PlannerConfig(**{k: tuple(v) if k == "widths" else v
                               for k, v in meta["config"].items()})
        model = cls(cfg, Vocab.from_json(meta["vocab"]),
                    tuple(meta.get("topic_list", ())))
        load_params(path, model.store)
        return model


def estimate_completion(model: PlannerModel, context: DialogueContext,
                        last_goal: Goal | None) -> float:
    """P(active goal complete). The very first turn has no active goal."""
    if last_goal is None:
        raise MissingGoalError("no active goal: the opening goal comes from "
                               "the task template, not the planner")
    ids, lengths = model._batch_ids([(context, last_goal)])
    enc, _ = model._encode(ids, lengths)
    logit, _ = model.comp_head.forward(enc)
    return float(1.0 / (1.0 + np.exp(-logit[0, 0])))


def predict_goal(model: PlannerModel, context: DialogueContext,
                 last_goal: Goal, candidates):
    """Distributions over next-goal type and over candidate topics."""
    if last_goal is None:
        raise MissingGoalError("no active goal")
    candidates = tuple(candidates)
    if not candidates:
        raise NoCandidateTopicsError("empty candidate topic list")
    ids, lengths = model._batch_ids([(context, last_goal)])
    enc, _ = model._encode(ids, lengths)
    tlogits, _ = model.type_head.forward(enc)
    type_probs = softmax(tlogits)[0]
    if model.config.topic_mode == "dynamic":
        vecs, _ = model._entity_vectors(candidates)
        proj, _ = model.topic_proj.forward(enc)
        scores = (proj @ vecs.T)[0]
    else:
        full, _ = model.topic_head.forward(enc)
        index = {t: i for i, t in enumerate(model.topic_list)}
        scores = np.array([full[0, index[c]] if c in index else -1e9
                           for c in candidates])
    topic_probs = softmax(scores[None, :])[0]
    return type_probs, topic_probs


def plan_next(model: PlannerModel, graph: KnowledgeGraph,
              context: DialogueContext, goal_history,
              profile: SeekerProfile | None = None) -> PlannerDecision:
    """Keep the active goal below the 0.5 completion threshold; otherwise
    pick the argmax type and topic. Score ties fall to the lexicographically
    smallest topic because candidates are sorted and argmax takes the first
    maximum."""
    history = tuple(goal_history)
    if not history:
        raise MissingGoalError("goal history is empty")
    profile = profile if profile is not None else context.profile
    last = history[-1]
    p = estimate_completion(model, context, last)
    cands = candidate_topics(graph, profile, history)
    type_probs, topic_probs = predict_goal(model, context, last, cands)
    if p < 0.5:
        return PlannerDecision(goal=last, completion_prob=p, changed=False,
                               type_probs=type_probs, candidates=cands,
                               topic_probs=topic_probs)
    dtype = _TYPES[int(np.argmax(type_probs))]
    topic = cands[int(np.argmax(topic_probs))]
    # corpus descriptions are template slot labels a live planner cannot
    # know; a proposed goal carries none rather than invented text
    goal = Goal(dialog_type=dtype, topic=topic, description="")
    return PlannerDecision(goal=goal, completion_prob=p, changed=True,
                           type_probs=type_probs, candidates=cands,
                           topic_probs=topic_probs)


def planner_examples(records, graph: KnowledgeGraph,
                     include_gold: bool = True) -> list[PlannerExample]:
    """One example per recommender turn after the first turn.

    The reference goal is the one active at the previous recommender turn
    (what a live session would believe); the completion label says whether
    the goal index moved since then, even if it moved on a seeker turn.
    """
    out: list[PlannerExample] = []
    for rec in records:
        last_bot_gi = rec.turns[0].goal_index
        for i, turn in enumerate(rec.turns):
            if turn.speaker is not Speaker.RECOMMENDER:
                continue
            if i == 0:
                last_bot_gi = turn.goal_index
                continue
            last_goal = rec.goals[last_bot_gi]
            target = rec.goals[turn.goal_index]
            completed = int(turn.goal_index != last_bot_gi)
            history = rec.goals[:last_bot_gi + 1]
            cands = candidate_topics(graph, rec.profile, history)
            if target.topic not in cands:
                if not include_gold:
                    last_bot_gi = turn.goal_index
                    continue
                cands = tuple(sorted(set(cands) | {target.topic}))
            out.append(PlannerExample(
                context=DialogueContext(utterances=rec.turns[:i],
                                        profile=rec.profile,
                                        knowledge=rec.knowledge),
                last_goal=last_goal,
                target_goal=target,
                completed=completed,
                candidates=cands,
                topic_index=cands.index(target.topic),
            ))
            last_bot_gi = turn.goal_index
    return out


def _forward_batch(model: PlannerModel, batch):
    ids, lengths = model._batch_ids([(ex.context, ex.last_goal)
                                     for ex in batch])
    enc, enc_cache = model._encode(ids, lengths)
    comp_logits, comp_cache = model.comp_head.forward(enc)
    type_logits, type_cache = model.type_head.forward(enc)
    return enc, enc_cache, comp_logits, comp_cache, type_logits, type_cache


def _topic_loss_and_grad(model: PlannerModel, batch, enc, denc):
    """Per-example candidate softmax. Adds grads in place, returns
    (loss, correct)."""
    total = 0.0
    correct = 0
    c = model.config
    for b, ex in enumerate(batch):
        if c.topic_mode == "dynamic":
            vecs, vcache = model._entity_vectors(ex.candidates)
            proj, pcache = model.topic_proj.forward(enc[b:b + 1])
            scores = proj @ vecs.T
        else:
            full, fcache = model.topic_head.forward(enc[b:b + 1])
            index = {t: i for i, t in enumerate(model.topic_list)}
            cols = np.array([index.get(t, -1) for t in ex.candidates])
            scores = np.where(cols[None, :] >= 0, full[:, cols], -1e9)
        loss, dscores = cross_entropy(scores, np.array([ex.topic_index]))
        total += loss
        if int(np.argmax(scores[0])) == ex.topic_index:
            correct += 1
        dscores = dscores / len(batch)
        if c.topic_mode == "dynamic":
            dproj = dscores @ vecs
            dvecs = dscores.T @ proj
            denc[b] += model.topic_proj.backward(dproj, pcache)[0]
            model._entity_backward(dvecs, vcache)
        else:
            dfull = np.zeros((1, len(model.topic_list)))
            for j, col in enumerate(cols):
                if col >= 0:
                    dfull[0, col] += dscores[0, j]
            denc[b] += model.topic_head.backward(dfull, fcache)[0]
    return total / len(batch), correct


def train_planner(config: PlannerConfig, records, graph: KnowledgeGraph,
                  seed: int | None = None):
    """Joint training of the three heads. Returns (model, history) where
    history has one entry per epoch with the running loss and the three
    training accuracies."""
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    examples = planner_examples(records, graph)
    if not examples:
        raise ValueError("no planner examples in the corpus")
    texts: list[str] = []
    for rec in records:
        texts.extend(u.text for u in rec.turns)
        for g in rec.goals:
            texts.append(g.topic)
            texts.append(g.description)
        texts.append(" ".join(_profile_tokens(rec.profile)))
    for e in graph.entities():
        texts.append(e)
    vocab = Vocab.build(texts)
    topic_list = tuple(sorted(graph.entities())) \
        if config.topic_mode == "fixed" else ()
    model = PlannerModel(config, vocab, topic_list)
    opt = Adam(model.store, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        tot_loss = 0.0
        n_batches = 0
        comp_ok = type_ok = topic_ok = 0
        for s in range(0, len(order), config.batch_size):
            batch = [examples[j] for j in order[s:s + config.batch_size]]
            model.store.zero_grad()
            enc, enc_cache, comp_logits, comp_cache, type_logits, type_cache \
                = _forward_batch(model, batch)
            comp_labels = np.array([ex.completed for ex in batch],
                                   dtype=np.float64)
            type_labels = np.array([_TYPES.index(ex.target_goal.dialog_type)
                                    for ex in batch])
            comp_loss, dcomp = binary_cross_entropy(comp_logits[:, 0],
                                                    comp_labels)
            type_loss, dtype_ = cross_entropy(type_logits, type_labels)
            denc = model.comp_head.backward(dcomp[:, None], comp_cache)
            denc = denc + model.type_head.backward(dtype_, type_cache)
            topic_loss, tcorrect = _topic_loss_and_grad(model, batch, enc,
                                                        denc)
            model._encode_backward(denc, enc_cache)
            clip_global_norm(model.store, config.clip)
            opt.step()
            tot_loss += comp_loss + type_loss + topic_loss
            n_batches += 1
            comp_ok += int((((comp_logits[:, 0] > 0).astype(int)
                             == comp_labels.astype(int))).sum())
            type_ok += int((type_logits.argmax(axis=1) == type_labels).sum())
            topic_ok += tcorrect
        n = len(examples)
        history.append({
            "epoch": epoch,
            "loss": tot_loss / max(n_batches, 1),
            "completion_acc": comp_ok / n,
            "type_acc": type_ok / n,
            "topic_acc": topic_ok / n,
        })
    return model, history


def evaluate_planner(model: PlannerModel, records, graph: KnowledgeGraph) -> dict:
    """Held-out accuracies for the three heads."""
    examples = planner_examples(records, graph)
    if not examples:
        return {"completion_acc": 0.0, "type_acc": 0.0, "topic_acc": 0.0,
                "n": 0}
    comp_ok = type_ok = topic_ok = 0
    for ex in examples:
        p = estimate_completion(model, ex.context, ex.last_goal)
        comp_ok += int((p >= 0.5) == bool(ex.completed))
        type_probs, topic_probs = predict_goal(model, ex.context,
                                               ex.last_goal, ex.candidates)
        type_ok += int(_TYPES[int(np.argmax(type_probs))]
                       is ex.target_goal.dialog_type)
        topic_ok += int(int(np.argmax(topic_probs)) == ex.topic_index)
    n = len(examples)
    return {"completion_acc": comp_ok / n, "type_acc": type_ok / n,
            "topic_acc": topic_ok / n, "n": n}
