"""Differentiable building blocks with hand-written backward passes.

Every block follows the same contract: forward(...) returns (output, cache)
and backward(dout, cache) accumulates into the owning ParamStore and returns
gradients for its inputs. Activations are smooth (tanh, sigmoid, tanh-form
gelu) so finite-difference checks converge; see gradcheck.py.
"""

import numpy as np

from . import kernels
from .params import ParamStore

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(x):
    """tanh-form gelu; smooth everywhere, close to x*Phi(x)."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x ** 3)))


def gelu_grad(x):
    u = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(u)
    sech2 = 1.0 - t * t
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)


def softmax(x, axis=-1):
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(dprob, prob, axis=-1):
    dot = np.sum(dprob * prob, axis=axis, keepdims=True)
    return prob * (dprob - dot)


def reverse_padded(x, lengths):
    """Reverse each row's first lengths[b] steps, leaving padding in place."""
    out = np.zeros_like(x)
    for b, L in enumerate(lengths):
        L = int(L)
        out[b, :L] = x[b, :L][::-1]
    return out


class Embedding:
    """Token id -> row lookup with scatter-add backward."""

    def __init__(self, store: ParamStore, name: str, vocab_size: int, dim: int,
                 scale: float = 0.08):
        self.table = store.uniform(f"{name}/table", (vocab_size, dim), scale)

    def forward(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return self.table.value[ids], ids

    def backward(self, dout, cache):
        ids = cache
        np.add.at(self.table.grad, ids, dout)
        return None


class Linear:
    """y = x @ W.T + b over the trailing axis."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int,
                 bias: bool = True, init: str = "uniform"):
        if init == "scaled":
            self.w = store.normal(f"{name}/w", (d_out, d_in), d_in ** -0.5)
        else:
            self.w = store.uniform(f"{name}/w", (d_out, d_in))
        self.b = store.zeros(f"{name}/b", (d_out,)) if bias else None

    def forward(self, x):
        y = x @ self.w.value.T
        if self.b is not None:
            y = y + self.b.value
        return y, x

    def backward(self, dout, cache):
        x = cache
        flat_d = dout.reshape(-1, dout.shape[-1])
        flat_x = x.reshape(-1, x.shape[-1])
        self.w.grad += flat_d.T @ flat_x
        if self.b is not None:
            self.b.grad += flat_d.sum(axis=0)
        return dout @ self.w.value


class MLP:
    """Stacked Linear layers, tanh between them, optional output activation.

    dims = (d_in, h1, ..., d_out). out_act in {None, "tanh", "sigmoid"}.
    """

    def __init__(self, store: ParamStore, name: str, dims, out_act=None,
                 init: str = "uniform"):
        self.layers = [Linear(store, f"{name}/l{i}", dims[i], dims[i + 1],
                              init=init)
                       for i in range(len(dims) - 1)]
        self.out_act = out_act

    def forward(self, x):
        caches = []
        h = x
        for i, layer in enumerate(self.layers):
            a, lc = layer.forward(h)
            last = i == len(self.layers) - 1
            if not last:
                h = np.tanh(a)
            elif self.out_act == "tanh":
                h = np.tanh(a)
            elif self.out_act == "sigmoid":
                h = 1.0 / (1.0 + np.exp(-a))
            else:
                h = a
            caches.append((lc, h, last))
        return h, caches

    def backward(self, dout, caches):
        d = dout
        for layer, (lc, h, last) in zip(reversed(self.layers), reversed(caches)):
            if not last or self.out_act == "tanh":
                d = d * (1.0 - h * h)
            elif self.out_act == "sigmoid":
                d = d * h * (1.0 - h)
            d = layer.backward(d, lc)
        return d


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int,
                 eps: float = 1e-5):
        self.gamma = store.constant(f"{name}/gamma", np.ones(dim))
        self.beta = store.zeros(f"{name}/beta", (dim,))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        return xhat * self.gamma.value + self.beta.value, (xhat, inv)

    def backward(self, dout, cache):
        xhat, inv = cache
        flat_d = dout.reshape(-1, dout.shape[-1])
        flat_x = xhat.reshape(-1, xhat.shape[-1])
        self.gamma.grad += (flat_d * flat_x).sum(axis=0)
        self.beta.grad += flat_d.sum(axis=0)
        dxhat = dout * self.gamma.value
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - m1 - xhat * m2)


class Dropout:
    """Inverted dropout; identity when p == 0 or training is False."""

    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng

    def forward(self, x, training: bool):
        if not training or self.p <= 0.0:
            return x, None
        mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * mask, mask

    def backward(self, dout, cache):
        if cache is None:
            return dout
        return dout * cache


class GRULayer:
    """Input projection + kernel-dispatched GRU over a padded batch."""

    def __init__(self, store: ParamStore, name: str, d_in: int, hidden: int):
        self.hidden = hidden
        self.wx = store.uniform(f"{name}/wx", (3 * hidden, d_in))
        self.bx = store.zeros(f"{name}/bx", (3 * hidden,))
        self.uh = store.uniform(f"{name}/uh", (3 * hidden, hidden))

    def forward(self, x, lengths, h0=None):
        B = x.shape[0]
        if h0 is None:
            h0 = np.zeros((B, self.hidden))
        gx = x @ self.wx.value.T + self.bx.value
        h, kc = kernels.gru_forward(gx, lengths, self.uh.value, h0)
        return h, (x, kc)

    def backward(self, dh_out, cache):
        x, kc = cache
        dgx, duh, dh0 = kernels.gru_backward(dh_out, kc, self.uh.value)
        self.uh.grad += duh
        flat_d = dgx.reshape(-1, dgx.shape[-1])
        self.wx.grad += flat_d.T @ x.reshape(-1, x.shape[-1])
        self.bx.grad += flat_d.sum(axis=0)
        return dgx @ self.wx.value, dh0

    def last_states(self, h, lengths):
        idx = np.maximum(np.asarray(lengths, dtype=np.int64) - 1, 0)
        return h[np.arange(h.shape[0]), idx]

    def backward_from_last(self, dlast, h, lengths, cache):
        dh_out = np.zeros_like(h)
        idx = np.maximum(np.asarray(lengths, dtype=np.int64) - 1, 0)
        dh_out[np.arange(h.shape[0]), idx] = dlast
        return self.backward(dh_out, cache)


class BiGRU:
    """Forward and reversed GRU; summary is [fwd last ; bwd first]."""

    def __init__(self, store: ParamStore, name: str, d_in: int, hidden: int):
        self.hidden = hidden
        self.fwd = GRULayer(store, f"{name}/fwd", d_in, hidden)
        self.bwd = GRULayer(store, f"{name}/bwd", d_in, hidden)

    def forward(self, x, lengths):
        hf, cf = self.fwd.forward(x, lengths)
        xr = reverse_padded(x, lengths)
        hb_r, cb = self.bwd.forward(xr, lengths)
        hb = reverse_padded(hb_r, lengths)
        states = np.concatenate([hf, hb], axis=-1)
        summary = np.concatenate(
            [self.fwd.last_states(hf, lengths), hb[:, 0]], axis=-1)
        return states, summary, (lengths, cf, cb, hf.shape)

    def backward(self, dstates, dsummary, cache):
        lengths, cf, cb, shape = cache
        H = self.hidden
        if dstates is None:
            dstates = np.zeros(shape[:2] + (2 * H,))
        else:
            dstates = dstates.copy()
        if dsummary is not None:
            idx = np.maximum(np.asarray(lengths, dtype=np.int64) - 1, 0)
            rows = np.arange(shape[0])
            dstates[rows, idx, :H] += dsummary[:, :H]
            dstates[:, 0, H:] += dsummary[:, H:]
        dxf, _ = self.fwd.backward(dstates[..., :H], cf)
        dxb_r, _ = self.bwd.backward(reverse_padded(dstates[..., H:], lengths), cb)
        return dxf + reverse_padded(dxb_r, lengths)


class ConvMaxPool:
    """1-d convolutions over time at several widths, masked max-pool, tanh.

    Output dim is filters * len(widths). Window positions whose right edge
    passes a row's length are excluded from the max.
    """

    def __init__(self, store: ParamStore, name: str, d_in: int, filters: int,
                 widths=(2, 3, 4)):
        self.widths = tuple(widths)
        self.filters = filters
        self.kernels = [store.uniform(f"{name}/w{w}", (filters, w * d_in))
                        for w in self.widths]
        self.biases = [store.zeros(f"{name}/b{w}", (filters,))
                       for w in self.widths]

    def forward(self, x, lengths):
        B, T0, D = x.shape
        lengths = np.asarray(lengths, dtype=np.int64)
        # inputs shorter than the widest kernel are zero-padded, not rejected
        T = max(T0, max(self.widths))
        if T > T0:
            x = np.concatenate([x, np.zeros((B, T - T0, D))], axis=1)
        outs, caches = [], []
        for w, kern, bias in zip(self.widths, self.kernels, self.biases):
            P = T - w + 1
            # windows: (B, P, w*D) strided view copied for contiguity
            win = np.stack([x[:, p:p + w].reshape(B, -1) for p in range(P)], axis=1)
            a = win @ kern.value.T + bias.value
            valid = (np.arange(P)[None, :] + w) <= np.maximum(lengths, w)[:, None]
            a_masked = np.where(valid[:, :, None], a, -1e9)
            arg = a_masked.argmax(axis=1)
            pooled = np.take_along_axis(a_masked, arg[:, None, :], axis=1)[:, 0, :]
            out = np.tanh(pooled)
            outs.append(out)
            caches.append((win, arg, out, w, P))
        return np.concatenate(outs, axis=-1), (caches, x.shape, T0)

    def backward(self, dout, cache):
        caches, xshape, t0 = cache
        B, T, D = xshape
        dx = np.zeros(xshape)
        off = 0
        for kern, bias, (win, arg, out, w, P) in zip(self.kernels, self.biases, caches):
            d = dout[:, off:off + self.filters] * (1.0 - out * out)
            off += self.filters
            da = np.zeros((B, P, self.filters))
            np.put_along_axis(da, arg[:, None, :], d[:, None, :], axis=1)
            flat = da.reshape(-1, self.filters)
            kern.grad += flat.T @ win.reshape(-1, win.shape[-1])
            bias.grad += flat.sum(axis=0)
            dwin = da @ kern.value
            for p in range(P):
                dx[:, p:p + w] += dwin[:, p].reshape(B, w, D)
        return dx[:, :t0]


class MultiHeadAttention:
    """Self-attention with additive -1e9 masking on padded key positions."""

    def __init__(self, store: ParamStore, name: str, dim: int, heads: int):
        if dim % heads:
            raise ValueError("dim must divide evenly into heads")
        self.heads = heads
        self.dk = dim // heads
        self.q = Linear(store, f"{name}/q", dim, dim, init="scaled")
        self.k = Linear(store, f"{name}/k", dim, dim, init="scaled")
        self.v = Linear(store, f"{name}/v", dim, dim, init="scaled")
        self.o = Linear(store, f"{name}/o", dim, dim, init="scaled")

    def _split(self, x):
        B, T, D = x.shape
        return x.reshape(B, T, self.heads, self.dk).transpose(0, 2, 1, 3)

    def _merge(self, x):
        B, H, T, dk = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, H * dk)

    def forward(self, x, key_mask):
        q, qc = self.q.forward(x)
        k, kc = self.k.forward(x)
        v, vc = self.v.forward(x)
        qh, kh, vh = self._split(q), self._split(k), self._split(v)
        scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(self.dk)
        scores = scores + np.where(key_mask[:, None, None, :], 0.0, -1e9)
        probs = softmax(scores, axis=-1)
        ctx = probs @ vh
        out, oc = self.o.forward(self._merge(ctx))
        return out, (qc, kc, vc, oc, qh, kh, vh, probs)

    def backward(self, dout, cache):
        qc, kc, vc, oc, qh, kh, vh, probs = cache
        dctx_m = self.o.backward(dout, oc)
        dctx = self._split(dctx_m)
        dprobs = dctx @ vh.transpose(0, 1, 3, 2)
        dvh = probs.transpose(0, 1, 3, 2) @ dctx
        dscores = softmax_backward(dprobs, probs) / np.sqrt(self.dk)
        dqh = dscores @ kh
        dkh = dscores.transpose(0, 1, 3, 2) @ qh
        dx = self.q.backward(self._merge(dqh), qc)
        dx += self.k.backward(self._merge(dkh), kc)
        dx += self.v.backward(self._merge(dvh), vc)
        return dx


class TransformerBlock:
    """Post-LN residual block: LN(x + MHA(x)), then LN(h + FFN(h))."""

    def __init__(self, store: ParamStore, name: str, dim: int, heads: int,
                 ffn_dim: int):
        self.attn = MultiHeadAttention(store, f"{name}/attn", dim, heads)
        self.ln1 = LayerNorm(store, f"{name}/ln1", dim)
        self.ff1 = Linear(store, f"{name}/ff1", dim, ffn_dim, init="scaled")
        self.ff2 = Linear(store, f"{name}/ff2", ffn_dim, dim, init="scaled")
        self.ln2 = LayerNorm(store, f"{name}/ln2", dim)

    def forward(self, x, key_mask):
        a, ac = self.attn.forward(x, key_mask)
        h1, l1c = self.ln1.forward(x + a)
        f, f1c = self.ff1.forward(h1)
        fa = gelu(f)
        f2, f2c = self.ff2.forward(fa)
        out, l2c = self.ln2.forward(h1 + f2)
        return out, (ac, l1c, f1c, f, f2c, l2c)

    def backward(self, dout, cache):
        ac, l1c, f1c, f, f2c, l2c = cache
        dsum2 = self.ln2.backward(dout, l2c)
        dfa = self.ff2.backward(dsum2, f2c)
        df = dfa * gelu_grad(f)
        dh1 = self.ff1.backward(df, f1c) + dsum2
        dsum1 = self.ln1.backward(dh1, l1c)
        dx = self.attn.backward(dsum1, ac)
        return dx + dsum1


class SelfAttentionEncoder:
    """Pair encoder over [CLS] a [SEP] b [SEP] with learned token, position,
    and segment embeddings; the first output state summarizes the pair."""

    def __init__(self, store: ParamStore, name: str, vocab_size: int, dim: int,
                 heads: int, layers: int, ffn_dim: int, max_len: int,
                 tok: Embedding | None = None):
        # token table may be shared with other encoders in the same model
        self.tok = tok if tok is not None else Embedding(
            store, f"{name}/tok", vocab_size, dim)
        self.pos = Embedding(store, f"{name}/pos", max_len, dim)
        self.seg = Embedding(store, f"{name}/seg", 2, dim)
        self.blocks = [TransformerBlock(store, f"{name}/b{i}", dim, heads, ffn_dim)
                       for i in range(layers)]
        self.max_len = max_len

    def forward(self, ids, segments, lengths):
        B, T = ids.shape
        if T > self.max_len:
            raise ValueError(f"sequence length {T} exceeds max_len {self.max_len}")
        positions = np.broadcast_to(np.arange(T), (B, T))
        te, tc = self.tok.forward(ids)
        pe, pc = self.pos.forward(positions)
        se, sc = self.seg.forward(segments)
        h = te + pe + se
        key_mask = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
        bcaches = []
        for block in self.blocks:
            h, bc = block.forward(h, key_mask)
            bcaches.append(bc)
        return h[:, 0], h, (tc, pc, sc, bcaches, key_mask, h.shape)

    def backward(self, dsummary, dstates, cache):
        tc, pc, sc, bcaches, key_mask, shape = cache
        d = np.zeros(shape) if dstates is None else dstates.copy()
        if dsummary is not None:
            d[:, 0] += dsummary
        for block, bc in zip(reversed(self.blocks), reversed(bcaches)):
            d = block.backward(d, bc)
        d = d * key_mask[:, :, None]
        self.tok.backward(d, tc)
        self.pos.backward(d, pc)
        self.seg.backward(d, sc)


class KnowledgeAttention:
    """Soft selection over encoded knowledge items.

    A query MLP maps a feature vector to the knowledge space; dot scores
    against the item encodings pass through a masked softmax and the probs
    form a convex combination of the items. Backward accepts gradients on
    the fused vector and, separately, on the raw scores (losses defined
    directly on the distribution feed in through dscores_extra).
    """

    def __init__(self, store: ParamStore, name: str, query_dim: int,
                 know_dim: int, hidden: int):
        self.mlp = MLP(store, f"{name}/query", (query_dim, hidden, know_dim),
                       init="scaled")

    def forward(self, feats, items, mask):
        """feats (B, Q), items (B, N, K), mask (B, N) true on real items.
        Returns (fused (B, K), probs, scores, cache)."""
        q, qc = self.mlp.forward(feats)
        scores = np.einsum("bk,bnk->bn", q, items)
        scores = np.where(mask, scores, -1e9)
        probs = softmax(scores, axis=-1)
        fused = np.einsum("bn,bnk->bk", probs, items)
        return fused, probs, scores, (qc, q, items, mask, probs)

    def backward(self, dfused, dscores_extra, cache):
        qc, q, items, mask, probs = cache
        ditems = np.zeros_like(items)
        dprobs = np.zeros_like(probs)
        if dfused is not None:
            dprobs += np.einsum("bk,bnk->bn", dfused, items)
            ditems += probs[:, :, None] * dfused[:, None, :]
        dscores = softmax_backward(dprobs, probs)
        if dscores_extra is not None:
            dscores = dscores + dscores_extra
        dscores = np.where(mask, dscores, 0.0)
        dq = np.einsum("bn,bnk->bk", dscores, items)
        ditems += dscores[:, :, None] * q[:, None, :]
        dfeats = self.mlp.backward(dq, qc)
        return dfeats, ditems


class HgfuDecoder:
    """Recurrent decoder whose hidden state fuses a word-driven cell and a
    knowledge-driven cell through an elementwise sigmoid gate.

    The knowledge cell re-reads the same fused-knowledge vector k_c at every
    step; there is no attention over encoder states. Output logits come from
    a single projection of the fused state.
    """

    def __init__(self, store: ParamStore, name: str, emb_dim: int,
                 know_dim: int, hidden: int, vocab_size: int):
        self.hidden = hidden
        self.ww = store.uniform(f"{name}/ww", (3 * hidden, emb_dim))
        self.bw = store.zeros(f"{name}/bw", (3 * hidden,))
        self.wk = store.uniform(f"{name}/wk", (3 * hidden, know_dim))
        self.bk = store.zeros(f"{name}/bk", (3 * hidden,))
        self.uw = store.uniform(f"{name}/uw", (3 * hidden, hidden))
        self.uk = store.uniform(f"{name}/uk", (3 * hidden, hidden))
        self.wg = store.uniform(f"{name}/wg", (hidden, 2 * hidden))
        self.bg = store.zeros(f"{name}/bg", (hidden,))
        self.out = Linear(store, f"{name}/out", hidden, vocab_size)

    def forward(self, emb, kc_vec, lengths, s0):
        """Teacher-forced pass. emb (B, T, E), kc_vec (B, K), s0 (B, H).
        Returns (logits (B, T, V), states, cache)."""
        gxw = emb @ self.ww.value.T + self.bw.value
        gxk = kc_vec @ self.wk.value.T + self.bk.value
        s, kc = kernels.hgfu_forward(gxw, gxk, lengths, self.uw.value,
                                     self.uk.value, self.wg.value,
                                     self.bg.value, s0)
        logits, oc = self.out.forward(s)
        return logits, s, (emb, kc_vec, kc, oc)

    def backward(self, dlogits, cache, dstates=None):
        emb, kc_vec, kc, oc = cache
        ds = self.out.backward(dlogits, oc)
        if dstates is not None:
            ds = ds + dstates
        dgxw, dgxk, duw, duk, dwg, dbg, ds0 = kernels.hgfu_backward(
            ds, kc, self.uw.value, self.uk.value, self.wg.value)
        self.uw.grad += duw
        self.uk.grad += duk
        self.wg.grad += dwg
        self.bg.grad += dbg
        flat = dgxw.reshape(-1, dgxw.shape[-1])
        self.ww.grad += flat.T @ emb.reshape(-1, emb.shape[-1])
        self.bw.grad += flat.sum(axis=0)
        self.wk.grad += dgxk.T @ kc_vec
        self.bk.grad += dgxk.sum(axis=0)
        demb = dgxw @ self.ww.value
        dkc_vec = dgxk @ self.wk.value
        return demb, dkc_vec, ds0

    def step(self, emb_t, kc_vec, s_prev):
        """Single greedy/beam step; emb_t (B, E), s_prev (B, H).
        Returns (logits (B, V), s_next)."""
        B = emb_t.shape[0]
        gxw = (emb_t @ self.ww.value.T + self.bw.value)[:, None, :]
        gxk = kc_vec @ self.wk.value.T + self.bk.value
        lengths = np.ones(B, dtype=np.int64)
        s, _ = kernels.hgfu_forward(gxw, gxk, lengths, self.uw.value,
                                    self.uk.value, self.wg.value,
                                    self.bg.value, s_prev)
        s_next = s[:, 0]
        logits = s_next @ self.out.w.value.T + self.out.b.value
        return logits, s_next
