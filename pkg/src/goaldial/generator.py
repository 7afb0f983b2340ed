"""Generation responder: decode a reply from context, fused knowledge, and
the active goal, with probabilistic knowledge selection.

Two distributions over the encoded triples k_i exist side by side. The
prior uses only inference-time inputs, softmax(k_i . MLP([x; g_c])); the
posterior additionally reads the gold response encoding y,
softmax(k_i . MLP([x; y; g_c])). Training fuses knowledge under the
posterior, decodes through a gated two-cell recurrent decoder that re-reads
the fused vector at every step, and adds a bag-of-words head that must
predict the response tokens from the fused vector alone. The prior is
regressed onto the (fixed) posterior with a per-item-averaged KL term:

    L = alpha * L_KL + alpha * L_NLL + L_BOW,    alpha = softplus(raw)

where raw is trained jointly and starts at softplus^-1(1), so the scaled
and unscaled terms begin on equal footing. The posterior receives no KL
gradient; it learns only through the decoder and bag-of-words paths.

At inference the response does not exist: knowledge fuses under the prior,
and asking for the posterior raises. Decoding is beam search with scores
normalized by token count; width 1 reproduces greedy decoding exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .corpus import ablate
from .domain import Goal, Speaker
from .errors import PosteriorUnavailableError
from .knowledge import linearize
from .neural.layers import (BiGRU, Dropout, Embedding, HgfuDecoder,
                            KnowledgeAttention, Linear, MLP)
from .neural.losses import (bow_loss, kl_divergence, log_softmax,
                            sequence_nll)
from .neural.optim import Adam, clip_global_norm
from .neural.params import ParamStore
from .neural.snapshot import load_params, peek_meta, save_params
from .ranker import RankedList, focus_knowledge
from .tokenizer import RECOMMENDER_TOK, SEEKER_TOK, Vocab, tokenize

__all__ = [
    "ALPHA_RAW_INIT",
    "GeneratorConfig",
    "GeneratorModel",
    "GenerationResult",
    "prior_dist",
    "posterior_dist",
    "train_generator",
    "generate",
    "evaluate_perplexity",
    "score_candidates_by_ppl",
    "evaluate_ppl_hits",
]

# softplus(ALPHA_RAW_INIT) == 1, so the loss starts unweighted
ALPHA_RAW_INIT = 0.5413248546129181


def _softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def _sigmoid(x: float) -> float:
    return float(1.0 / (1.0 + np.exp(-x)))


@dataclass
class GeneratorConfig:
    emb: int = 56
    ctx_hidden: int = 48
    know_hidden: int = 36
    goal_hidden: int = 12
    resp_hidden: int = 24
    attn_hidden: int = 64
    dec_hidden: int = 112
    bow_hidden: int = 128
    ctx_tokens: int = 64
    know_limit: int = 12
    max_len: int = 50
    beam: int = 3
    # s2s collapses to a plain encoder-decoder: goal and knowledge inputs
    # are dropped and the decoder sees only the null fused vector
    s2s: bool = False
    dropout: float = 0.0
    lr: float = 2e-3
    batch_size: int = 16
    epochs: int = 24
    clip: float = 5.0
    seed: int = 0

    @classmethod
    def paper(cls) -> "GeneratorConfig":
        """Full-scale settings: 300-dim embeddings, 800-wide recurrent and
        hidden layers, dropout 0.2, Adam lr 5e-4, batch 16, beam 10."""
        return cls(emb=300, ctx_hidden=400, know_hidden=400, goal_hidden=400,
                   resp_hidden=400, attn_hidden=800, dec_hidden=800,
                   bow_hidden=800, ctx_tokens=256, beam=10, dropout=0.2,
                   lr=5e-4, epochs=30)


@dataclass(frozen=True)
class GenerationResult:
    """Decoded reply with its length-normalized log-probability."""

    text: str
    tokens: tuple[str, ...]
    score: float
    logprob: float
    knowledge_weights: np.ndarray


class GeneratorModel:
    def __init__(self, config: GeneratorConfig, vocab: Vocab):
        self.config = config
        self.vocab = vocab
        self.store = ParamStore(seed=config.seed)
        c = config
        # one token table serves every encoder and the decoder input
        self.tok = Embedding(self.store, "tok", len(vocab), c.emb)
        self.ctx_enc = BiGRU(self.store, "ctx", c.emb, c.ctx_hidden)
        self.know_enc = BiGRU(self.store, "know", c.emb, c.know_hidden)
        self.goal_enc = BiGRU(self.store, "goal", c.emb, c.goal_hidden)
        # response encoder feeds the posterior only; dead weight at inference
        self.resp_enc = BiGRU(self.store, "resp", c.emb, c.resp_hidden)
        self.x_dim = 2 * c.ctx_hidden
        self.know_dim = 2 * c.know_hidden
        self.goal_dim = 2 * c.goal_hidden
        self.y_dim = 2 * c.resp_hidden
        self.null_know = self.store.normal("null_know", (self.know_dim,), 0.08)
        self.null_goal = self.store.normal("null_goal", (self.goal_dim,), 0.08)
        self.prior = KnowledgeAttention(
            self.store, "prior", self.x_dim + self.goal_dim, self.know_dim,
            c.attn_hidden)
        self.posterior = KnowledgeAttention(
            self.store, "posterior",
            self.x_dim + self.y_dim + self.goal_dim, self.know_dim,
            c.attn_hidden)
        self.init_state = Linear(self.store, "init",
                                 self.x_dim + self.goal_dim, c.dec_hidden)
        self.decoder = HgfuDecoder(self.store, "dec", c.emb, self.know_dim,
                                   c.dec_hidden, len(vocab))
        self.bow = MLP(self.store, "bow",
                       (self.know_dim, c.bow_hidden, len(vocab)))
        self.alpha_raw = self.store.constant("alpha_raw", ALPHA_RAW_INIT)
        self.drop_x = Dropout(c.dropout, np.random.default_rng(c.seed + 1))
        self.drop_in = Dropout(c.dropout, np.random.default_rng(c.seed + 2))
        self.train_mode = False

    @property
    def alpha(self) -> float:
        return _softplus(float(self.alpha_raw.value))

    # -- persistence -------------------------------------------------------

    def save(self, path):
        meta = {"kind": "generator",
                "config": dataclasses.asdict(self.config),
                "vocab": self.vocab.to_json()}
        save_params(path, self.store, meta)

    @classmethod
    def load(cls, path) -> "GeneratorModel":
        meta = peek_meta(path)
        if meta.get("kind") != "generator":
            raise ValueError(f"{path} holds a {meta.get('kind')!r} snapshot")
        model = cls(GeneratorConfig(**meta["config"]),
                    Vocab.from_json(meta["vocab"]))
        load_params(path, model.store)
        return model


# -- encoding helpers -------------------------------------------------------


def _pad_rows(rows, pad: int = 0):
    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    T = max(1, int(lengths.max()))
    out = np.full((len(rows), T), pad, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out, np.maximum(lengths, 1)


def _context_ids(model: GeneratorModel, context) -> list[int]:
    """Speaker-tagged token ids for the most recent context window."""
    if isinstance(context, str):
        toks = tokenize(context)
    else:
        toks = []
        for u in context:
            tag = SEEKER_TOK if u.speaker is Speaker.SEEKER else RECOMMENDER_TOK
            toks.append(tag)
            toks.extend(tokenize(u.text))
    toks = toks[-model.config.ctx_tokens:]
    return model.vocab.encode(toks) or [model.vocab.unk_id]


def _goal_tokens(goal: Goal) -> list[str]:
    return [goal.dialog_type.token] + tokenize(goal.topic) + \
        tokenize(goal.description)


def _response_ids(model: GeneratorModel, text: str) -> list[int]:
    ids = model.vocab.encode_text(text)[:model.config.max_len - 1]
    return ids + [model.vocab.eos_id]


def _encode_rows(model: GeneratorModel, encoder: BiGRU, rows):
    """Shared-embedding BiGRU over id rows -> (summaries (B, 2H), cache)."""
    ids, lengths = _pad_rows(rows)
    x, ec = model.tok.forward(ids)
    _, summary, cache = encoder.forward(x, lengths)
    return summary, (ec, cache, encoder)


def _encode_rows_backward(model: GeneratorModel, dsummary, cache):
    ec, enc_cache, encoder = cache
    dx = encoder.backward(None, dsummary, enc_cache)
    model.tok.backward(dx, ec)


def _encode_goals(model: GeneratorModel, goals):
    """Per-example goal vectors; None rows take the learned null vector."""
    B = len(goals)
    G = np.tile(model.null_goal.value, (B, 1))
    real = [i for i, g in enumerate(goals) if g is not None]
    cache = None
    if real:
        rows = [model.vocab.encode(_goal_tokens(goals[i])) or
                [model.vocab.unk_id] for i in real]
        summ, cache = _encode_rows(model, model.goal_enc, rows)
        G[real] = summ
    return G, (real, cache)


def _encode_goals_backward(model: GeneratorModel, dG, cache):
    real, enc_cache = cache
    mask = np.ones(len(dG), dtype=bool)
    mask[real] = False
    model.null_goal.grad += dG[mask].sum(axis=0)
    if real:
        _encode_rows_backward(model, dG[real], enc_cache)


def _encode_knowledge_sets(model: GeneratorModel, triple_sets):
    """Encode per-example triple lists into a padded item tensor.

    Returns (items (B, Nmax, K), mask (B, Nmax), has_k row indices, cache).
    Examples with empty sets stay fully masked.
    """
    B = len(triple_sets)
    counts = [len(ts) for ts in triple_sets]
    nmax = max(1, max(counts, default=0))
    items = np.zeros((B, nmax, model.know_dim))
    mask = np.zeros((B, nmax), dtype=bool)
    has_k = [i for i, n in enumerate(counts) if n > 0]
    cache = None
    if has_k:
        rows = []
        for i in has_k:
            for t in triple_sets[i]:
                rows.append(model.vocab.encode(linearize(t)) or
                            [model.vocab.unk_id])
        flat, cache = _encode_rows(model, model.know_enc, rows)
        pos = 0
        for i in has_k:
            n = counts[i]
            items[i, :n] = flat[pos:pos + n]
            mask[i, :n] = True
            pos += n
    return items, mask, has_k, (counts, cache)


def _knowledge_sets_backward(model: GeneratorModel, ditems, kcache):
    counts, enc_cache = kcache
    rows = [ditems[i, :n] for i, n in enumerate(counts) if n > 0]
    if rows:
        _encode_rows_backward(model, np.concatenate(rows, axis=0), enc_cache)


# -- shared encode-and-fuse pass --------------------------------------------


def _fuse_prior(model: GeneratorModel, contexts, triple_sets, goals,
                train: bool = False):
    """Inference-path encoding: context, goals, prior-fused knowledge, s0.

    Returns (fused, weights list per example, s0, cache). No response enters
    anywhere, so outputs are identical whether or not one exists.
    """
    X, xcache = _encode_rows(model, model.ctx_enc,
                             [_context_ids(model, c) for c in contexts])
    X, dxc = model.drop_x.forward(X, training=train)
    G, gcache = _encode_goals(model, goals)
    items, mask, has_k, kcache = _encode_knowledge_sets(model, triple_sets)
    B = len(contexts)
    fused = np.tile(model.null_know.value, (B, 1))
    weights = [np.zeros(0) for _ in range(B)]
    acache = None
    if has_k:
        feats = np.concatenate([X[has_k], G[has_k]], axis=-1)
        sub_mask = mask[has_k]
        f_sub, probs, _, acache = model.prior.forward(
            feats, items[has_k], sub_mask)
        fused[has_k] = f_sub
        for r, i in enumerate(has_k):
            weights[i] = probs[r, sub_mask[r]]
    s_in = np.concatenate([X, G], axis=-1)
    pre, icache = model.init_state.forward(s_in)
    s0 = np.tanh(pre)
    return fused, weights, s0, (xcache, dxc, gcache, kcache, acache, has_k,
                                items, mask, s0)


def _per_sequence_nll(logits, targets, lengths):
    """Token-mean NLL per sequence, plus corpus totals."""
    B, T, _ = logits.shape
    mask = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
    lp = log_softmax(logits)
    rows = np.repeat(np.arange(B), T).reshape(B, T)
    cols = np.broadcast_to(np.arange(T), (B, T))
    tok_nll = -lp[rows, cols, targets] * mask
    per_seq = tok_nll.sum(axis=1) / np.maximum(np.asarray(lengths), 1)
    return per_seq, float(tok_nll.sum()), int(mask.sum())


def _teacher_forced_logits(model: GeneratorModel, fused, s0, target_rows,
                           train: bool = False):
    targets, lengths = _pad_rows(target_rows)
    bos = np.full((len(target_rows), 1), model.vocab.bos_id, dtype=np.int64)
    dec_in = np.concatenate([bos, targets[:, :-1]], axis=1)
    emb, ec = model.tok.forward(dec_in)
    emb, dc = model.drop_in.forward(emb, training=train)
    logits, _, dcache = model.decoder.forward(emb, fused, lengths, s0)
    return targets, lengths, logits, (ec, dc, dcache)


# -- public distributions ----------------------------------------------------


def prior_dist(model: GeneratorModel, context, knowledge,
               goal: Goal | None = None) -> np.ndarray:
    """Prior selection probabilities over the given triples, in their order."""
    triples = list(knowledge)
    if not triples:
        return np.zeros(0)
    _, weights, _, _ = _fuse_prior(model, [context], [triples], [goal])
    return weights[0]


def posterior_dist(model: GeneratorModel, context, response: str, knowledge,
                   goal: Goal | None = None) -> np.ndarray:
    """Response-conditioned selection probabilities; training-time only."""
    if not model.train_mode:
        raise PosteriorUnavailableError(
            "posterior knowledge selection reads the gold response and is "
            "only defined during training")
    triples = list(knowledge)
    if not triples:
        return np.zeros(0)
    X, _ = _encode_rows(model, model.ctx_enc,
                        [_context_ids(model, context)])
    G, _ = _encode_goals(model, [goal])
    Y, _ = _encode_rows(model, model.resp_enc,
                        [model.vocab.encode_text(response) or
                         [model.vocab.unk_id]])
    items, mask, _, _ = _encode_knowledge_sets(model, [triples])
    feats = np.concatenate([X, Y, G], axis=-1)
    _, probs, _, _ = model.posterior.forward(feats, items, mask)
    return probs[0, mask[0]]


# -- training ----------------------------------------------------------------


def _train_batch(model: GeneratorModel, batch):
    """Forward and backward for one batch; returns loss components."""
    contexts = [ex.context.utterances for ex in batch]
    goals = [ex.goal for ex in batch]
    triple_sets = []
    for ex in batch:
        know = list(focus_knowledge(ex.knowledge, ex.goal,
                                    ex.context.utterances,
                                    model.config.know_limit))
        if ex.knowledge:
            # keep annotated triples reachable when the focus window is full
            know.extend(g for g in ex.gold_knowledge if g not in know)
        triple_sets.append(know)
    target_rows = [_response_ids(model, ex.response.text) for ex in batch]

    X, xcache = _encode_rows(model, model.ctx_enc,
                             [_context_ids(model, c) for c in contexts])
    X, dxc = model.drop_x.forward(X, training=True)
    G, gcache = _encode_goals(model, goals)
    Y, ycache = _encode_rows(model, model.resp_enc,
                             [model.vocab.encode_text(ex.response.text) or
                              [model.vocab.unk_id] for ex in batch])
    items, mask, has_k, kcache = _encode_knowledge_sets(model, triple_sets)

    B = len(batch)
    fused = np.tile(model.null_know.value, (B, 1))
    kl = 0.0
    prior_cache = post_cache = None
    dprior_scores = None
    if has_k:
        sub_items, sub_mask = items[has_k], mask[has_k]
        prior_feats = np.concatenate([X[has_k], G[has_k]], axis=-1)
        _, _, prior_scores, prior_cache = model.prior.forward(
            prior_feats, sub_items, sub_mask)
        post_feats = np.concatenate([X[has_k], Y[has_k], G[has_k]], axis=-1)
        f_sub, post_probs, _, post_cache = model.posterior.forward(
            post_feats, sub_items, sub_mask)
        fused[has_k] = f_sub
        # posterior enters as a constant: the KL term trains the prior only
        kl, dprior_scores = kl_divergence(post_probs, prior_scores, sub_mask)

    s_in = np.concatenate([X, G], axis=-1)
    pre, icache = model.init_state.forward(s_in)
    s0 = np.tanh(pre)
    targets, lengths, logits, tcache = _teacher_forced_logits(
        model, fused, s0, target_rows, train=True)
    nll, dlogits, tot_nll, tot_tok = sequence_nll(logits, targets, lengths)
    bow_logits, bcache = model.bow.forward(fused)
    bow, dbow = bow_loss(bow_logits, targets, lengths)
    alpha = model.alpha
    loss = alpha * (kl + nll) + bow

    # backward
    model.alpha_raw.grad += _sigmoid(float(model.alpha_raw.value)) * (kl + nll)
    ec, dc, dcache = tcache
    demb, dfused, ds0 = model.decoder.backward(alpha * dlogits, dcache)
    demb = model.drop_in.backward(demb, dc)
    model.tok.backward(demb, ec)
    dfused = dfused + model.bow.backward(dbow, bcache)
    ds_in = model.init_state.backward(ds0 * (1.0 - s0 * s0), icache)
    dX = ds_in[:, :model.x_dim].copy()
    dG = ds_in[:, model.x_dim:].copy()
    dY = np.zeros_like(Y)
    if has_k:
        dpost_feats, ditems_q = model.posterior.backward(
            dfused[has_k], None, post_cache)
        dprior_feats, ditems_p = model.prior.backward(
            None, alpha * dprior_scores, prior_cache)
        xd, yd = model.x_dim, model.y_dim
        dX[has_k] += dpost_feats[:, :xd] + dprior_feats[:, :xd]
        dY[has_k] = dpost_feats[:, xd:xd + yd]
        dG[has_k] += dpost_feats[:, xd + yd:] + dprior_feats[:, xd:]
        ditems = np.zeros_like(items)
        ditems[has_k] = ditems_q + ditems_p
        _knowledge_sets_backward(model, ditems, kcache)
    no_k = np.ones(B, dtype=bool)
    no_k[has_k] = False
    model.null_know.grad += dfused[no_k].sum(axis=0)
    _encode_rows_backward(model, dY, ycache)
    _encode_goals_backward(model, dG, gcache)
    dX = model.drop_x.backward(dX, dxc)
    _encode_rows_backward(model, dX, xcache)
    return loss, nll, float(kl), bow, tot_nll, tot_tok


def train_generator(config: GeneratorConfig, examples, seed: int | None = None,
                    graph=None):
    """Teacher-forced training; returns (model, history).

    The vocabulary covers the training texts, goal strings, linearized
    knowledge, and (when the shared graph is given) every graph triple, so
    held-out facts stay in-vocabulary. With ``config.s2s`` the goal and
    knowledge inputs are stripped from every example first.
    """
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    examples = list(examples)
    if not examples:
        raise ValueError("no training examples")
    if config.s2s:
        examples = [ablate(ex, drop_goal=True, drop_knowledge=True)
                    for ex in examples]
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
    model = GeneratorModel(config, vocab)
    model.train_mode = True
    opt = Adam(model.store, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        sums = {"loss": 0.0, "nll": 0.0, "kl": 0.0, "bow": 0.0}
        tot_nll = 0.0
        tot_tok = 0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start:start + config.batch_size]]
            model.store.zero_grad()
            loss, nll, kl, bow, bn, bt = _train_batch(model, batch)
            sums["loss"] += loss * len(batch)
            sums["nll"] += nll * len(batch)
            sums["kl"] += kl * len(batch)
            sums["bow"] += bow * len(batch)
            tot_nll += bn
            tot_tok += bt
            clip_global_norm(model.store, config.clip)
            opt.step()
        n = len(examples)
        history.append({"epoch": epoch,
                        **{k: v / n for k, v in sums.items()},
                        "ppl": float(np.exp(tot_nll / max(tot_tok, 1))),
                        "alpha": model.alpha})
    model.train_mode = False
    return model, history


# -- inference ---------------------------------------------------------------


def _prepare_inference(model: GeneratorModel, context, knowledge, goal):
    if isinstance(context, str):
        utterances = ()
    else:
        utterances = tuple(context)
    triples = list(focus_knowledge(knowledge, goal, utterances,
                                   model.config.know_limit))
    if model.config.s2s:
        triples, goal = [], None
    fused, weights, s0, _ = _fuse_prior(model, [context], [triples], [goal])
    return fused, weights[0], s0


def generate(model: GeneratorModel, context, knowledge=(),
             goal: Goal | None = None, beam: int | None = None,
             max_len: int | None = None) -> GenerationResult:
    """Beam-search decode; scores are summed log-probabilities divided by
    token count, and width 1 is exactly greedy."""
    width = beam if beam is not None else model.config.beam
    if width < 1:
        raise ValueError("beam width must be at least 1")
    limit = max_len if max_len is not None else model.config.max_len
    fused, weights, s0 = _prepare_inference(model, context, knowledge, goal)
    eos = model.vocab.eos_id
    # each hypothesis: (token ids, summed logprob, decoder state)
    alive = [((), 0.0, s0[0])]
    done: list[tuple[tuple[int, ...], float]] = []
    for t in range(limit):
        ids = np.array([h[0][-1] if h[0] else model.vocab.bos_id
                        for h in alive], dtype=np.int64)
        emb = model.tok.table.value[ids]
        states = np.stack([h[2] for h in alive])
        logits, s_next = model.decoder.step(
            emb, np.broadcast_to(fused[0], (len(alive), fused.shape[1])),
            states)
        lp = log_softmax(logits)
        flat = (np.array([h[1] for h in alive])[:, None] + lp).ravel()
        # stable sort: ties keep beam order first, then lower token id,
        # matching greedy argmax
        top = np.argsort(-flat, kind="stable")[:width]
        nxt = []
        for f in top:
            b, tok = divmod(int(f), lp.shape[1])
            seq = alive[b][0] + (int(tok),)
            score = float(flat[f])
            if tok == eos or t == limit - 1:
                done.append((seq, score))
            else:
                nxt.append((seq, score, s_next[b]))
        alive = nxt[:width]
        if not alive:
            break
    if not done:
        done = [(h[0], h[1]) for h in alive]
    seq, logprob = max(done, key=lambda d: (d[1] / max(len(d[0]), 1),
                                            -len(d[0])))
    toks = tuple(model.vocab.id_to_token[i] for i in seq if i != eos)
    return GenerationResult(text=model.vocab.to_text(seq),
                            tokens=toks,
                            score=logprob / max(len(seq), 1),
                            logprob=logprob,
                            knowledge_weights=weights)


def evaluate_perplexity(model: GeneratorModel, examples,
                        batch_size: int = 32) -> float:
    """Corpus perplexity of the gold responses under the prior-fused decoder:
    exp of total NLL over total token count."""
    examples = list(examples)
    tot_nll = 0.0
    tot_tok = 0
    for start in range(0, len(examples), batch_size):
        batch = examples[start:start + batch_size]
        triple_sets = []
        for ex in batch:
            if model.config.s2s:
                triple_sets.append([])
                continue
            triple_sets.append(list(focus_knowledge(
                ex.knowledge, ex.goal, ex.context.utterances,
                model.config.know_limit)))
        goals = [None if model.config.s2s else ex.goal for ex in batch]
        fused, _, s0, _ = _fuse_prior(
            model, [ex.context.utterances for ex in batch], triple_sets,
            goals)
        rows = [_response_ids(model, ex.response.text) for ex in batch]
        targets, lengths, logits, _ = _teacher_forced_logits(
            model, fused, s0, rows)
        _, bn, bt = _per_sequence_nll(logits, targets, lengths)
        tot_nll += bn
        tot_tok += bt
    return float(np.exp(tot_nll / max(tot_tok, 1)))


def score_candidates_by_ppl(model: GeneratorModel, context, pool,
                            knowledge=(), goal: Goal | None = None,
                            gold_index: int | None = None) -> RankedList:
    """Rank a candidate pool by teacher-forced perplexity, lowest first.

    Every candidate shares the prior-fused knowledge and initial state of
    the context. RankedList.probs holds negated perplexities so that its
    higher-is-better ordering convention still applies; ties break toward
    the lower candidate index.
    """
    if hasattr(pool, "candidates"):
        candidates = tuple(pool.candidates)
        if gold_index is None:
            gold_index = pool.gold_index
    else:
        candidates = tuple(pool)
    fused, weights, s0 = _prepare_inference(model, context, knowledge, goal)
    B = len(candidates)
    fused_b = np.broadcast_to(fused[0], (B, fused.shape[1]))
    s0_b = np.broadcast_to(s0[0], (B, s0.shape[1]))
    rows = [_response_ids(model, c) for c in candidates]
    targets, lengths, logits, _ = _teacher_forced_logits(
        model, fused_b, s0_b, rows)
    per_seq, _, _ = _per_sequence_nll(logits, targets, lengths)
    ppl = np.exp(per_seq)
    order = tuple(sorted(range(B), key=lambda i: (ppl[i], i)))
    return RankedList(candidates=candidates, probs=-ppl, order=order,
                      knowledge_weights=weights, gold_index=gold_index)


def evaluate_ppl_hits(model: GeneratorModel, examples, pools,
                      ks=(1, 3)) -> dict:
    """Hits@k when pools are ranked by candidate perplexity."""
    ranks = []
    for ex, pool in zip(examples, pools):
        rl = score_candidates_by_ppl(model, ex.context.utterances, pool,
                                     ex.knowledge, ex.goal)
        ranks.append(rl.gold_rank)
    out = {}
    for k in ks:
        out[f"hits@{k}"] = sum(r <= k for r in ranks) / len(ranks) \
            if ranks else 0.0
    out["n"] = len(ranks)
    return out
