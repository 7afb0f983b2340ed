"""Evaluation metrics for retrieval, generation, and whole-dialog behaviour.

Conventions that matter and are easy to get wrong:

* ``bleu2`` smooths by default (add-one on both numerator and denominator of
  each n-gram precision); the raw variant is available via ``smoothed=False``.
* ``f1`` compares character multisets for CJK text and token multisets for
  whitespace-separated text; the choice is automatic unless forced.
* ``dist2`` is corpus-level: distinct bigrams over total bigrams across all
  hypotheses pooled together, not a mean of per-sentence ratios.
* ``knowledge_prf`` averages per-dialog P/R/F1 over dialogs. The averaged F1
  is a mean of per-dialog harmonic means, so it is NOT guaranteed to lie
  between the averaged P and averaged R.
* ``hits_at_k`` breaks score ties by the lower candidate index, so a gold
  candidate tied with an earlier distractor is ranked below it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field

from .domain import DialogType
from .tokenizer import is_cjk

__all__ = [
    "bleu2",
    "f1",
    "dist2",
    "knowledge_prf",
    "gold_rank",
    "hits_at_k",
    "goal_completion_analysis",
    "MetricReport",
]


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu2(hypothesis, reference, smoothed: bool = True) -> float:
    """Sentence BLEU with uniform weights over 1- and 2-gram precisions.

    Inputs are token sequences. An empty hypothesis scores 0. Brevity
    penalty exp(1 - r/c) applies when the hypothesis is shorter than the
    reference.
    """
    hyp = list(hypothesis)
    ref = list(reference)
    if not hyp:
        return 0.0
    log_p = 0.0
    for n in (1, 2):
        hgrams = _ngrams(hyp, n)
        rcounts = Counter(_ngrams(ref, n))
        hcounts = Counter(hgrams)
        matched = sum(min(c, rcounts[g]) for g, c in hcounts.items())
        total = len(hgrams)
        if smoothed:
            p = (matched + 1) / (total + 1)
        else:
            if matched == 0 or total == 0:
                return 0.0
            p = matched / total
        log_p += 0.5 * math.log(p)
    c, r = len(hyp), len(ref)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_p)


def _f1_units(text: str, granularity: str):
    if granularity == "char":
        return [ch for ch in text if not ch.isspace()]
    return text.split()


def _pick_granularity(hypothesis: str, reference: str) -> str:
    both = hypothesis + reference
    if any(is_cjk(ch) for ch in both):
        return "char"
    if any(ch.isspace() for ch in hypothesis.strip() + reference.strip()):
        return "token"
    return "char"


def f1(hypothesis: str, reference: str, granularity: str = "auto") -> float:
    """Harmonic mean of unit-multiset precision and recall.

    granularity: "char", "token", or "auto" (char when CJK characters are
    present or neither side contains whitespace, token otherwise).
    """
    if granularity not in ("auto", "char", "token"):
        raise ValueError(f"unknown granularity: {granularity!r}")
    if granularity == "auto":
        granularity = _pick_granularity(hypothesis, reference)
    h = Counter(_f1_units(hypothesis, granularity))
    r = Counter(_f1_units(reference, granularity))
    overlap = sum((h & r).values())
    if overlap == 0:
        return 0.0
    p = overlap / sum(h.values())
    q = overlap / sum(r.values())
    return 2 * p * q / (p + q)


def dist2(hypotheses) -> float:
    """Distinct bigrams over total bigrams, pooled across the whole corpus."""
    seen = set()
    total = 0
    for hyp in hypotheses:
        toks = list(hyp)
        for g in _ngrams(toks, 2):
            seen.add(g)
            total += 1
    if total == 0:
        return 0.0
    return len(seen) / total


def _triple_object(triple):
    if hasattr(triple, "object"):
        return triple.object
    return triple[2]


def _triple_key(triple):
    if hasattr(triple, "as_list"):
        return tuple(triple.as_list())
    return tuple(triple)


def knowledge_prf(dialogs):
    """Knowledge precision/recall/F1, averaged per dialog.

    Each dialog is a sequence of turns ``(hypothesis_text, gold_triples,
    pool_triples)``. A pool triple counts as *produced* when its object
    surface string occurs verbatim in the hypothesis; a gold triple counts
    as *hit* under the same test. Per dialog:

        P = |produced ∩ gold| / |produced|,  R = |hit gold| / |gold|

    summed over turns, then F1 from that dialog's own P and R. Returns the
    means over dialogs as ``(P, R, F1)``.
    """
    ps, rs, fs = [], [], []
    for turns in dialogs:
        produced = 0
        produced_gold = 0
        gold_total = 0
        gold_hit = 0
        for hyp, gold, pool in turns:
            gold_keys = {_triple_key(t) for t in gold}
            seen = set()
            for t in pool:
                k = _triple_key(t)
                if k in seen:
                    continue
                seen.add(k)
                if _triple_object(t) and _triple_object(t) in hyp:
                    produced += 1
                    if k in gold_keys:
                        produced_gold += 1
            gold_total += len(gold_keys)
            hit_keys = set()
            for t in gold:
                if _triple_object(t) and _triple_object(t) in hyp:
                    hit_keys.add(_triple_key(t))
            gold_hit += len(hit_keys)
        p = produced_gold / produced if produced else 0.0
        r = gold_hit / gold_total if gold_total else 0.0
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    if not ps:
        return 0.0, 0.0, 0.0
    n = len(ps)
    return sum(ps) / n, sum(rs) / n, sum(fs) / n


def gold_rank(scores, gold_index: int) -> int:
    """1-based rank of the gold candidate under descending score order.

    Ties resolve toward the lower candidate index, so an equal-scored
    earlier distractor outranks the gold.
    """
    gs = scores[gold_index]
    rank = 1
    for i, s in enumerate(scores):
        if s > gs or (s == gs and i < gold_index):
            rank += 1
    return rank


def hits_at_k(ranked, k: int) -> float:
    """Fraction of items whose gold candidate ranks within the top k.

    ``ranked`` holds either precomputed 1-based gold ranks or
    ``(scores, gold_index)`` pairs.
    """
    items = list(ranked)
    if not items:
        return 0.0
    hits = 0
    for item in items:
        if isinstance(item, (int,)):
            r = item
        else:
            scores, gi = item
            r = gold_rank(scores, gi)
        if r <= k:
            hits += 1
    return hits / len(items)


def goal_completion_analysis(rollouts):
    """Aggregate per-dialog-type goal outcomes from simulated dialogs.

    Each rollout exposes ``goal_events`` whose entries carry a dialog type,
    a completed flag, and a knowledge_used flag, either as attributes or as
    a plain 3-tuple. Returns a dict keyed by dialog-type value plus
    "overall", each holding completed / failed / knowledge_used counts.
    """
    table = {t.value: {"completed": 0, "failed": 0, "knowledge_used": 0}
             for t in DialogType}
    overall = {"completed": 0, "failed": 0, "knowledge_used": 0}
    for roll in rollouts:
        events = roll.goal_events if hasattr(roll, "goal_events") else roll
        for event in events:
            if hasattr(event, "dialog_type"):
                dialog_type = event.dialog_type
                completed = event.completed
                knowledge_used = event.knowledge_used
            else:
                dialog_type, completed, knowledge_used = event
            key = dialog_type.value if isinstance(dialog_type, DialogType) \
                else str(dialog_type)
            row = table[key]
            if completed:
                row["completed"] += 1
                overall["completed"] += 1
            else:
                row["failed"] += 1
                overall["failed"] += 1
            row["knowledge_used"] += int(knowledge_used)
            overall["knowledge_used"] += int(knowledge_used)
    table["overall"] = overall
    return table


@dataclass
class MetricReport:
    """Bundle of evaluation numbers with JSON and CSV export.

    F1-family metrics are stored as fractions; the CSV additionally shows
    them scaled by 100 in the conventional reporting style.
    """

    model: str = ""
    hits1: float | None = None
    hits3: float | None = None
    f1: float | None = None
    bleu2: float | None = None
    ppl: float | None = None
    dist2: float | None = None
    knowledge_p: float | None = None
    knowledge_r: float | None = None
    knowledge_f1: float | None = None
    goal_counts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    _PCT = ("f1", "knowledge_p", "knowledge_r", "knowledge_f1")
    _COLS = ("hits1", "hits3", "f1", "bleu2", "ppl", "dist2",
             "knowledge_p", "knowledge_r", "knowledge_f1")

    def to_dict(self) -> dict:
        out = {"model": self.model}
        for k in self._COLS:
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        if self.goal_counts:
            out["goal_counts"] = self.goal_counts
        if self.extra:
            out["extra"] = self.extra
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        header = ["model"]
        row = [self.model]
        for k in self._COLS:
            v = getattr(self, k)
            if v is None:
                continue
            header.append(k)
            row.append(f"{v:.4f}")
            if k in self._PCT:
                header.append(f"{k}_x100")
                row.append(f"{100 * v:.2f}")
        w.writerow(header)
        w.writerow(row)
        for key, counts in self.goal_counts.items():
            w.writerow([f"goal:{key}", counts.get("completed", 0),
                        counts.get("failed", 0), counts.get("knowledge_used", 0)])
        return buf.getvalue()
