"""Loss functions paired with their input gradients.

Each returns (scalar_loss, grad_wrt_first_arg[, extras]); callers feed the
gradient straight into the layer backward chain. All reductions are batch
means so gradient scale is independent of batch size.
"""

import numpy as np

from .layers import softmax


def log_softmax(x, axis=-1):
    x = x - np.max(x, axis=axis, keepdims=True)
    return x - np.log(np.sum(np.exp(x), axis=axis, keepdims=True))


def cross_entropy(logits, labels):
    """Mean CE over rows. logits (B, C), labels (B,) int."""
    B = logits.shape[0]
    lp = log_softmax(logits)
    rows = np.arange(B)
    loss = -lp[rows, labels].mean()
    d = softmax(logits)
    d[rows, labels] -= 1.0
    return loss, d / B


def binary_cross_entropy(logits, labels):
    """Sigmoid CE on a vector of logits; labels in {0, 1} (float ok)."""
    labels = np.asarray(labels, dtype=np.float64)
    p = 1.0 / (1.0 + np.exp(-logits))
    eps = 1e-12
    loss = -(labels * np.log(p + eps) + (1 - labels) * np.log(1 - p + eps)).mean()
    return loss, (p - labels) / logits.shape[0]


def sequence_nll(logits, targets, lengths):
    """Teacher-forced NLL, token-mean inside each sequence then batch mean.

    logits (B, T, V), targets (B, T) int, lengths (B,). Returns
    (loss, dlogits, total_nll, total_tokens); the last two feed perplexity,
    which normalizes by the corpus token count instead.
    """
    B, T, V = logits.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    mask = np.arange(T)[None, :] < lengths[:, None]
    lp = log_softmax(logits)
    rows = np.repeat(np.arange(B), T).reshape(B, T)
    cols = np.broadcast_to(np.arange(T), (B, T))
    tok_nll = -lp[rows, cols, targets] * mask
    per_seq = tok_nll.sum(axis=1) / np.maximum(lengths, 1)
    loss = per_seq.mean()
    d = softmax(logits)
    np.subtract.at(d, (rows, cols, targets), 1.0)
    d *= (mask / np.maximum(lengths, 1)[:, None])[:, :, None] / B
    return loss, d, float(tok_nll.sum()), int(mask.sum())


def perplexity(total_nll: float, total_tokens: int) -> float:
    if total_tokens == 0:
        return float("inf")
    return float(np.exp(total_nll / total_tokens))


def nll_loss(logits, gold):
    """Single-sequence NLL: mean over positions of -log softmax(logits)[gold].
    logits (T, V), gold (T,) int."""
    logits = np.asarray(logits, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.int64)
    if logits.shape[0] != gold.shape[0]:
        raise ValueError(f"length mismatch: {logits.shape[0]} logits vs "
                         f"{gold.shape[0]} gold tokens")
    lp = log_softmax(logits)
    return float(-lp[np.arange(len(gold)), gold].mean())


def kl_div_loss(posterior, prior):
    """Scalar KL(posterior || prior) averaged over the N support items,
    on explicit distributions. Raises on a zero prior where the posterior
    has mass."""
    q = np.asarray(posterior, dtype=np.float64)
    p = np.asarray(prior, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError(f"support size mismatch: {q.shape} vs {p.shape}")
    if abs(q.sum() - 1.0) > 1e-6 or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("distributions must each sum to 1 within 1e-6")
    if np.any((p <= 0.0) & (q > 0.0)):
        raise ValueError("prior has zero mass where posterior is positive")
    n = q.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(q > 0, q * (np.log(q) - np.log(p)), 0.0)
    return float(term.sum() / n)


def kl_divergence(post_probs, prior_logits, mask):
    """KL(posterior || prior) over knowledge items, averaged per item.

    post_probs (B, N) is treated as a constant (no gradient flows back to
    it); prior_logits (B, N) receives (prior - post) / N. mask (B, N) marks
    real items; N is the per-row count of real items. Returns
    (batch_mean_kl, dprior_logits).
    """
    post_probs = np.asarray(post_probs, dtype=np.float64)
    if np.any(post_probs < -1e-12):
        raise ValueError("posterior probabilities must be nonnegative")
    n_items = mask.sum(axis=1)
    if np.any(n_items == 0):
        raise ValueError("every row needs at least one knowledge item")
    ml = np.where(mask, prior_logits, -1e9)
    prior_lp = log_softmax(ml)
    post = np.where(mask, post_probs, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(post > 0, post * (np.log(post) - prior_lp), 0.0)
    per_row = term.sum(axis=1) / n_items
    loss = per_row.mean()
    B = post.shape[0]
    d = (np.exp(prior_lp) * post.sum(axis=1, keepdims=True) - post)
    d = np.where(mask, d, 0.0) / n_items[:, None] / B
    return float(loss), d


def bow_loss(word_logits, targets, lengths):
    """Bag-of-words auxiliary loss: one vocab distribution per example must
    cover every target token. word_logits (B, V), targets (B, T)."""
    B, V = word_logits.shape
    T = targets.shape[1]
    lengths = np.asarray(lengths, dtype=np.int64)
    mask = np.arange(T)[None, :] < lengths[:, None]
    lp = log_softmax(word_logits)
    counts = np.zeros((B, V))
    rows = np.repeat(np.arange(B), T).reshape(B, T)
    np.add.at(counts, (rows[mask], targets[mask]), 1.0)
    m = np.maximum(lengths, 1).astype(np.float64)
    loss = (-(counts * lp).sum(axis=1) / m).mean()
    d = (softmax(word_logits) * (counts.sum(axis=1, keepdims=True)) - counts)
    d = d / m[:, None] / B
    return float(loss), d
