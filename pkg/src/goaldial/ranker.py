"""Retrieval responder: score candidate responses against context, fused
knowledge, and the active goal.

Pipeline per candidate y for context x:

1. a self-attention pair encoder reads [CLS] x [SEP] y [SEP] and its first
   output state xy summarizes the pair,
2. bi-recurrent encoders produce one vector per knowledge triple and one
   for the active goal,
3. attention weights softmax(MLP([xy; g_c]) . k_i) fuse the triples into
   k_c,
4. the matcher maps [xy; k_c; g_c] through an MLP to a two-way softmax; the
   positive-class probability is the candidate's score.

Empty knowledge pools fall back to a learned null vector, as does the
goal-ablated condition, so ablations change inputs without changing code
paths. Context is truncated head-first: the oldest tokens go, the most
recent survive.

Training is pointwise binary classification: the gold response scores 1,
sampled distractor responses score 0. Candidate ranking breaks score ties
toward the lower candidate index.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .domain import Goal, Speaker
from .knowledge import KnowledgeTriple, linearize
from .neural.layers import (BiGRU, Dropout, Embedding, KnowledgeAttention,
                            MLP, SelfAttentionEncoder, softmax)
from .neural.losses import cross_entropy
from .neural.optim import Adam, clip_global_norm, warmup_linear_decay
from .neural.params import ParamStore
from .neural.snapshot import load_params, peek_meta, save_params
from .tokenizer import (CLS, RECOMMENDER_TOK, SEEKER_TOK, SEP, Vocab,
                        tokenize)

__all__ = [
    "RankerConfig",
    "RankerModel",
    "RankedList",
    "encode_pair",
    "focus_knowledge",
    "select_knowledge",
    "match",
    "rank",
    "train_ranker",
    "evaluate_hits",
]


@dataclass
class RankerConfig:
    emb: int = 64
    heads: int = 4
    layers: int = 2
    ffn: int = 128
    pair_len: int = 56
    cand_tokens: int = 22
    know_hidden: int = 32
    goal_hidden: int = 16
    attn_hidden: int = 64
    match_hidden: int = 128
    dropout: float = 0.1
    n_negatives: int = 5
    hard_negatives: int = 3
    # easy negatives only for the first epochs, then similarity-mined ones
    hard_after_epoch: int = 2
    # weight of the auxiliary attention loss toward annotated gold triples
    select_aux: float = 1.0
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_frac: float = 0.1
    examples_per_step: int = 8
    epochs: int = 12
    clip: float = 5.0
    seed: int = 0

    @classmethod
    def paper(cls) -> "RankerConfig":
        """Full-scale settings: 512-wide embeddings and hidden layers,
        dropout 0.1, batch 32, lr 0.001, weight decay 0.01, 10% warmup."""
        return cls(emb=512, heads=8, layers=4, ffn=2048, pair_len=512,
                   cand_tokens=64, know_hidden=256, goal_hidden=128,
                   attn_hidden=512, match_hidden=512, examples_per_step=32,
                   epochs=30)


@dataclass(frozen=True)
class RankedList:
    """Pool candidates with matcher probabilities. ``order`` holds candidate
    indices best-first; ties prefer the lower index."""

    candidates: tuple[str, ...]
    probs: np.ndarray
    order: tuple[int, ...]
    knowledge_weights: np.ndarray
    gold_index: int | None = None

    @property
    def best(self) -> str:
        return self.candidates[self.order[0]]

    @property
    def gold_rank(self) -> int | None:
        if self.gold_index is None:
            return None
        return self.order.index(self.gold_index) + 1


class RankerModel:
    def __init__(self, config: RankerConfig, vocab: Vocab):
        self.config = config
        self.vocab = vocab
        self.store = ParamStore(seed=config.seed)
        c = config
        self.side_emb = Embedding(self.store, "tok", len(vocab), c.emb)
        # pair encoder shares the token table with the triple/goal encoders
        # so surface-string matches line up across the two paths
        self.pair = SelfAttentionEncoder(self.store, "pair", len(vocab),
                                         c.emb, c.heads, c.layers, c.ffn,
                                         c.pair_len, tok=self.side_emb)
        self.know_enc = BiGRU(self.store, "know", c.emb, c.know_hidden)
        self.goal_enc = BiGRU(self.store, "goal", c.emb, c.goal_hidden)
        self.know_dim = 2 * c.know_hidden
        self.goal_dim = 2 * c.goal_hidden
        self.null_know = self.store.normal("null_know", (self.know_dim,), 0.08)
        self.null_goal = self.store.normal("null_goal", (self.goal_dim,), 0.08)
        self.selector = KnowledgeAttention(
            self.store, "select", c.emb + self.goal_dim, self.know_dim,
            c.attn_hidden)
        self.matcher = MLP(self.store, "match",
                           (c.emb + self.know_dim + self.goal_dim,
                            c.match_hidden, 2))
        self.drop = Dropout(c.dropout, np.random.default_rng(config.seed + 1))
        self.train_mode = False

    # -- persistence -------------------------------------------------------

    def save(self, path):
        meta = {"kind": "ranker",
                "config": dataclasses.asdict(self.config),
                "vocab": self.vocab.to_json()}
        save_params(path, self.store, meta)

    @classmethod
    def load(cls, path) -> "RankerModel":
        meta = peek_meta(path)
        if meta.get("kind") != "ranker":
            raise ValueError(f"{path} holds a {meta.get('kind')!r} snapshot")
        model = cls(RankerConfig(**meta["config"]),
                    Vocab.from_json(meta["vocab"]))
        load_params(path, model.store)
        return model


def focus_knowledge(triples, goal: Goal | None, utterances=(),
                    limit: int = 12):
    """Relevance-ordered subset of a knowledge pool.

    Triples about the goal topic first, then triples whose subject is
    mentioned in the last two utterances, then the rest, original order
    preserved within each tier, capped at ``limit``.
    """
    triples = tuple(triples)
    recent = " ".join(u.text for u in tuple(utterances)[-2:])
    tiers = ([], [], [])
    for t in triples:
        if goal is not None and t.subject == goal.topic:
            tiers[0].append(t)
        elif t.subject and t.subject in recent:
            tiers[1].append(t)
        else:
            tiers[2].append(t)
    out = [*tiers[0], *tiers[1], *tiers[2]]
    return tuple(out[:limit])


def _context_tail(utterances_or_text, cap: int) -> list[str]:
    """Most recent context tokens up to cap; oldest tokens are dropped."""
    if isinstance(utterances_or_text, str):
        toks = tokenize(utterances_or_text)
    else:
        toks = []
        for u in utterances_or_text:
            tag = SEEKER_TOK if u.speaker is Speaker.SEEKER else RECOMMENDER_TOK
            toks.append(tag)
            toks.extend(tokenize(u.text))
    return toks[-cap:]


def encode_pair(model: RankerModel, context, candidate: str):
    """Token ids and segment ids for [CLS] context [SEP] candidate [SEP].

    The candidate keeps at most ``cand_tokens`` tokens (tail truncated);
    whatever room remains inside ``pair_len`` goes to the most recent
    context tokens.
    """
    c = model.config
    cand = tokenize(candidate)[:c.cand_tokens]
    budget = c.pair_len - 3 - len(cand)
    ctx = _context_tail(context, budget)
    toks = [CLS] + ctx + [SEP] + cand + [SEP]
    ids = model.vocab.encode(toks)
    segs = [0] * (len(ctx) + 2) + [1] * (len(cand) + 1)
    return ids, segs


def _pad_batch(rows, pad: int = 0):
    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    T = max(1, int(lengths.max()))
    out = np.full((len(rows), T), pad, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out, lengths


def _encode_pairs(model: RankerModel, context, candidates):
    rows, seg_rows = [], []
    for cand in candidates:
        ids, segs = encode_pair(model, context, cand)
        rows.append(ids)
        seg_rows.append(segs)
    ids, lengths = _pad_batch(rows)
    segs, _ = _pad_batch(seg_rows)
    xy, _, cache = model.pair.forward(ids, segs, lengths)
    return xy, (cache,)


def _encode_tokens(model: RankerModel, encoder, token_rows):
    """Shared-embedding BiGRU over rows of tokens -> summaries (B, 2H)."""
    rows = [model.vocab.encode(r) or [model.vocab.unk_id] for r in token_rows]
    ids, lengths = _pad_batch(rows)
    x, ec = model.side_emb.forward(ids)
    states, summary, cache = encoder.forward(x, lengths)
    return summary, (ec, cache, encoder)


def _encode_tokens_backward(model: RankerModel, dsummary, cache):
    ec, enc_cache, encoder = cache
    dx = encoder.backward(None, dsummary, enc_cache)
    model.side_emb.backward(dx, ec)


def _encode_knowledge(model: RankerModel, triples):
    return _encode_tokens(model, model.know_enc,
                          [linearize(t) for t in triples])


def _encode_goal(model: RankerModel, goal: Goal | None):
    if goal is None:
        return model.null_goal.value.copy(), None
    toks = [goal.dialog_type.token] + tokenize(goal.topic) + \
        tokenize(goal.description)
    summary, cache = _encode_tokens(model, model.goal_enc, [toks])
    return summary[0], cache


def select_knowledge(model: RankerModel, xy, goal_vec, triples):
    """Fused knowledge vector and attention weights for each pair row.

    xy (B, D); the same triple set serves every row. An empty pool yields
    the learned null vector and an empty weight array.
    """
    B = xy.shape[0]
    if not triples:
        fused = np.tile(model.null_know.value, (B, 1))
        return fused, np.zeros((B, 0)), None
    k, kcache = _encode_knowledge(model, triples)
    items = np.broadcast_to(k, (B,) + k.shape)
    mask = np.ones((B, len(triples)), dtype=bool)
    feats = np.concatenate([xy, np.tile(goal_vec, (B, 1))], axis=-1)
    fused, probs, _, acache = model.selector.forward(feats, items, mask)
    return fused, probs, (kcache, acache, len(triples))


def match(model: RankerModel, xy, k_c, goal_vec):
    """Positive-class probability for each [xy; k_c; g_c] row."""
    B = xy.shape[0]
    feats = np.concatenate([xy, k_c, np.tile(goal_vec, (B, 1))], axis=-1)
    logits, cache = model.matcher.forward(feats)
    return softmax(logits)[:, 1], (logits, cache)


def _forward_pool(model: RankerModel, context, candidates, triples,
                  goal: Goal | None, train: bool = False):
    """Everything needed to score one candidate pool; returns probs plus
    caches for backward."""
    xy, pair_cache = _encode_pairs(model, context, candidates)
    xy, dcache = model.drop.forward(xy, training=train)
    gvec, gcache = _encode_goal(model, goal)
    fused, weights, scache = select_knowledge(model, xy, gvec, triples)
    feats = np.concatenate(
        [xy, fused, np.tile(gvec, (len(candidates), 1))], axis=-1)
    logits, mcache = model.matcher.forward(feats)
    probs = softmax(logits)[:, 1]
    return probs, logits, weights, (pair_cache, dcache, gcache, scache,
                                    mcache, xy.shape, goal)


def _backward_pool(model: RankerModel, dlogits, caches, aux_dscores=None):
    pair_cache, dcache, gcache, scache, mcache, xy_shape, goal = caches
    B, D = xy_shape
    K, G = model.know_dim, model.goal_dim
    dfeats = model.matcher.backward(dlogits, mcache)
    dxy = dfeats[:, :D].copy()
    dfused = dfeats[:, D:D + K]
    dgvec = dfeats[:, D + K:].sum(axis=0)
    if scache is None:
        model.null_know.grad += dfused.sum(axis=0)
    else:
        kcache, acache, n_items = scache
        dsel_feats, ditems = model.selector.backward(dfused, aux_dscores,
                                                     acache)
        dxy += dsel_feats[:, :D]
        dgvec += dsel_feats[:, D:].sum(axis=0)
        _encode_tokens_backward(model, ditems.sum(axis=0), kcache)
    if goal is None:
        model.null_goal.grad += dgvec
    else:
        _encode_tokens_backward(model, dgvec[None, :], gcache)
    dxy = model.drop.backward(dxy, dcache)
    (pcache,) = pair_cache
    model.pair.backward(dxy, None, pcache)


def rank(model: RankerModel, context, pool, knowledge=(),
         goal: Goal | None = None, gold_index: int | None = None) -> RankedList:
    """Score a candidate pool and order it best-first.

    ``pool`` is a CandidatePool (its gold index is used unless overridden)
    or any sequence of candidate strings.
    """
    if hasattr(pool, "candidates"):
        candidates = tuple(pool.candidates)
        if gold_index is None:
            gold_index = pool.gold_index
    else:
        candidates = tuple(pool)
    triples = tuple(knowledge)
    probs, _, weights, _ = _forward_pool(model, context, candidates, triples,
                                         goal)
    order = tuple(sorted(range(len(candidates)),
                         key=lambda i: (-probs[i], i)))
    return RankedList(candidates=candidates, probs=probs, order=order,
                      knowledge_weights=weights, gold_index=gold_index)


def _goal_of(example):
    return example.goal


def _bigrams(text: str) -> set:
    return {text[i:i + 2] for i in range(len(text) - 1)}


def _hard_negative_index(bank, top: int = 10):
    """For each bank response, the most lexically similar other responses
    by character-bigram Jaccard. Near-duplicates force the matcher to lean
    on knowledge and goal rather than surface overlap with the context."""
    grams = [_bigrams(t) for t in bank]
    out = []
    for i, gi in enumerate(grams):
        sims = []
        for j, gj in enumerate(grams):
            if i == j:
                continue
            inter = len(gi & gj)
            if inter == 0:
                continue
            sims.append((inter / len(gi | gj), j))
        sims.sort(key=lambda p: (-p[0], p[1]))
        out.append([j for _, j in sims[:top]])
    return out


def train_ranker(config: RankerConfig, examples, seed: int | None = None,
                 graph=None):
    """Pointwise training over (gold, sampled-negative) pools.

    Each example contributes one pool of 1 + n_negatives candidates sharing
    the example's context, knowledge, and goal; gradients accumulate over
    ``examples_per_step`` pools per optimizer step, with linear warmup into
    linear decay. When the shared knowledge graph is given, its linearized
    triples seed the vocabulary so held-out facts are not out-of-vocabulary.
    Returns (model, history).
    """
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    examples = list(examples)
    if not examples:
        raise ValueError("no training examples")
    bank = sorted({ex.response.text for ex in examples})
    texts: list[str] = []
    for ex in examples:
        texts.extend(u.text for u in ex.context.utterances)
        texts.append(ex.response.text)
        for t in ex.knowledge:
            texts.append(" ".join(linearize(t)))
        if ex.goal is not None:
            texts.append(ex.goal.topic)
            texts.append(ex.goal.description)
    if graph is not None:
        texts.extend(" ".join(linearize(t)) for t in graph.triples)
    vocab = Vocab.build(texts)
    model = RankerModel(config, vocab)
    model.train_mode = True
    opt = Adam(model.store, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    bank_pos = {t: i for i, t in enumerate(bank)}
    hard_idx = _hard_negative_index(bank) if config.hard_negatives else []
    steps_per_epoch = int(np.ceil(len(examples) / config.examples_per_step))
    total_steps = max(1, steps_per_epoch * config.epochs)
    history: list[dict] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        tot_loss = 0.0
        top1 = 0
        model.store.zero_grad()
        pending = 0
        for j, idx in enumerate(order):
            ex = examples[idx]
            negs = []
            if config.hard_negatives and epoch >= config.hard_after_epoch:
                near = hard_idx[bank_pos[ex.response.text]]
                take = min(config.hard_negatives, len(near))
                for hj in rng.permutation(len(near))[:take]:
                    negs.append(bank[near[hj]])
            while len(negs) < config.n_negatives:
                cand = bank[int(rng.integers(len(bank)))]
                if cand != ex.response.text and cand not in negs:
                    negs.append(cand)
            candidates = [ex.response.text] + negs
            know = focus_knowledge(ex.knowledge, ex.goal,
                                   ex.context.utterances)
            gold_know = [g for g in ex.gold_knowledge if g not in know]
            if gold_know and config.select_aux > 0:
                know = tuple(know) + tuple(gold_know)
            probs, logits, weights, caches = _forward_pool(
                model, ex.context.utterances, candidates, know,
                _goal_of(ex), train=True)
            labels = np.zeros(len(candidates), dtype=np.int64)
            labels[0] = 1
            # two-way softmax per candidate: CE against {0,1} is pointwise BCE
            loss, dlogits = cross_entropy(logits, labels)
            aux_dscores = None
            if config.select_aux > 0 and know and ex.gold_knowledge:
                # push the gold row's attention onto an annotated triple
                gidx = next((j for j, t in enumerate(know)
                             if t in ex.gold_knowledge), None)
                if gidx is not None:
                    loss += -config.select_aux * np.log(
                        max(weights[0, gidx], 1e-12))
                    aux_dscores = np.zeros_like(weights)
                    aux_dscores[0] = weights[0]
                    aux_dscores[0, gidx] -= 1.0
                    aux_dscores *= config.select_aux
            tot_loss += loss
            top1 += int(np.argmax(probs) == 0)
            _backward_pool(model, dlogits, caches, aux_dscores)
            pending += 1
            if pending == config.examples_per_step or j == len(order) - 1:
                for p in model.store:
                    p.grad /= pending
                clip_global_norm(model.store, config.clip)
                opt.step(lr_scale=warmup_linear_decay(step, total_steps,
                                                      config.warmup_frac))
                model.store.zero_grad()
                pending = 0
                step += 1
        history.append({"epoch": epoch,
                        "loss": tot_loss / len(examples),
                        "pool_top1": top1 / len(examples)})
    model.train_mode = False
    return model, history


def evaluate_hits(model: RankerModel, examples, pools, ks=(1, 3)) -> dict:
    """Hits@k for pre-built candidate pools aligned with examples."""
    ranks = []
    for ex, pool in zip(examples, pools):
        know = focus_knowledge(ex.knowledge, ex.goal, ex.context.utterances)
        rl = rank(model, ex.context.utterances, pool, know, _goal_of(ex))
        ranks.append(rl.gold_rank)
    out = {}
    for k in ks:
        out[f"hits@{k}"] = sum(r <= k for r in ranks) / len(ranks) \
            if ranks else 0.0
    out["n"] = len(ranks)
    return out
