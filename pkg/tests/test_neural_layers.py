"""Central-difference gradient checks for every layer block.

Each test builds a tiny instance, defines a scalar loss that touches every
output path, and requires max relative error < 1e-4 via the shared harness.
"""
import numpy as np
import pytest

from goaldial.neural.gradcheck import grad_check
from goaldial.neural.layers import (BiGRU, ConvMaxPool, Embedding, GRULayer,
                                    HgfuDecoder, KnowledgeAttention, LayerNorm,
                                    Linear, MLP, SelfAttentionEncoder,
                                    TransformerBlock)
from goaldial.neural.params import ParamStore


def _check(loss_fn, grad_fn, store, samples=5):
    report = grad_check(loss_fn, grad_fn, store, samples_per_param=samples)
    assert report.passed, str(report)


def test_linear_and_mlp_gradients():
    store = ParamStore(seed=0)
    rng = np.random.default_rng(1)
    lin = Linear(store, "lin", 5, 4)
    mlp = MLP(store, "mlp", (4, 6, 3), out_act="tanh")
    x = rng.standard_normal((7, 5))
    w1 = rng.standard_normal((7, 4))
    w2 = rng.standard_normal((7, 3))

    def fwd():
        h, _ = lin.forward(x)
        y, _ = mlp.forward(np.tanh(h))
        return float((h * w1).sum() + (y * w2).sum())

    def bwd():
        h, hc = lin.forward(x)
        a = np.tanh(h)
        y, yc = mlp.forward(a)
        da = mlp.backward(w2, yc)
        lin.backward(w1 + da * (1 - a * a), hc)
        return fwd()

    _check(fwd, bwd, store)


def test_embedding_and_layernorm_gradients():
    store = ParamStore(seed=2)
    rng = np.random.default_rng(3)
    emb = Embedding(store, "emb", 11, 6)
    ln = LayerNorm(store, "ln", 6)
    ids = rng.integers(0, 11, size=(3, 4))
    w = rng.standard_normal((3, 4, 6))

    def fwd():
        e, _ = emb.forward(ids)
        y, _ = ln.forward(e)
        return float((y * w).sum())

    def bwd():
        e, ec = emb.forward(ids)
        y, lc = ln.forward(e)
        emb.backward(ln.backward(w, lc), ec)
        return fwd()

    _check(fwd, bwd, store)


def test_bigru_gradients_ragged():
    store = ParamStore(seed=4)
    rng = np.random.default_rng(5)
    enc = BiGRU(store, "enc", 5, 4)
    x = rng.standard_normal((3, 6, 5))
    lengths = np.array([6, 3, 1])
    ws = rng.standard_normal((3, 6, 8))
    wsum = rng.standard_normal((3, 8))

    def fwd():
        states, summary, _ = enc.forward(x, lengths)
        return float((states * ws).sum() + (summary * wsum).sum())

    def bwd():
        _, _, cache = enc.forward(x, lengths)
        enc.backward(ws, wsum, cache)
        return fwd()

    _check(fwd, bwd, store)


def test_gru_last_state_gradients():
    store = ParamStore(seed=6)
    rng = np.random.default_rng(7)
    gru = GRULayer(store, "gru", 4, 5)
    x = rng.standard_normal((2, 5, 4))
    lengths = np.array([5, 2])
    w = rng.standard_normal((2, 5))

    def fwd():
        h, _ = gru.forward(x, lengths)
        return float((gru.last_states(h, lengths) * w).sum())

    def bwd():
        h, cache = gru.forward(x, lengths)
        gru.backward_from_last(w, h, lengths, cache)
        return fwd()

    _check(fwd, bwd, store)


def test_conv_maxpool_gradients_including_short_rows():
    store = ParamStore(seed=8)
    rng = np.random.default_rng(9)
    conv = ConvMaxPool(store, "conv", 4, 3, widths=(2, 3, 4))
    x = rng.standard_normal((3, 6, 4))
    lengths = np.array([6, 4, 2])  # one row shorter than the widest kernel
    w = rng.standard_normal((3, 9))

    def fwd():
        out, _ = conv.forward(x, lengths)
        return float((out * w).sum())

    def bwd():
        out, cache = conv.forward(x, lengths)
        conv.backward(w, cache)
        return fwd()

    _check(fwd, bwd, store)


def test_transformer_block_gradients():
    store = ParamStore(seed=10)
    rng = np.random.default_rng(11)
    block = TransformerBlock(store, "blk", 8, 2, 12)
    x = rng.standard_normal((2, 5, 8))
    key_mask = np.array([[True] * 5, [True, True, True, False, False]])
    w = rng.standard_normal((2, 5, 8)) * key_mask[:, :, None]

    def fwd():
        out, _ = block.forward(x, key_mask)
        return float((out * w).sum())

    def bwd():
        out, cache = block.forward(x, key_mask)
        block.backward(w, cache)
        return fwd()

    _check(fwd, bwd, store, samples=4)


def test_pair_encoder_gradients():
    store = ParamStore(seed=12)
    rng = np.random.default_rng(13)
    enc = SelfAttentionEncoder(store, "pair", vocab_size=13, dim=8, heads=2,
                               layers=2, ffn_dim=12, max_len=9)
    ids = rng.integers(0, 13, size=(2, 7))
    segments = (np.arange(7)[None, :] >= 3).astype(np.int64) * np.ones((2, 1), dtype=np.int64)
    lengths = np.array([7, 4])
    key_mask = np.arange(7)[None, :] < lengths[:, None]
    # the encoder drops padded-state gradients, so the loss must not read them
    wsum = rng.standard_normal((2, 8))
    wstates = rng.standard_normal((2, 7, 8)) * key_mask[:, :, None]

    def fwd():
        summary, states, _ = enc.forward(ids, segments, lengths)
        return float((summary * wsum).sum() + (states * wstates).sum())

    def bwd():
        summary, states, cache = enc.forward(ids, segments, lengths)
        enc.backward(wsum, wstates, cache)
        return fwd()

    _check(fwd, bwd, store, samples=3)


def test_pair_encoder_rejects_overlength_input():
    store = ParamStore(seed=0)
    enc = SelfAttentionEncoder(store, "pair", vocab_size=5, dim=4, heads=2,
                               layers=1, ffn_dim=6, max_len=4)
    with pytest.raises(ValueError):
        enc.forward(np.zeros((1, 6), dtype=np.int64),
                    np.zeros((1, 6), dtype=np.int64), np.array([6]))


def test_knowledge_attention_fused_path_gradients():
    store = ParamStore(seed=14)
    rng = np.random.default_rng(15)
    att = KnowledgeAttention(store, "ka", query_dim=6, know_dim=5, hidden=7)
    feats = rng.standard_normal((3, 6))
    items = rng.standard_normal((3, 4, 5))
    mask = np.ones((3, 4), dtype=bool)
    mask[1, 2:] = False
    w = rng.standard_normal((3, 5))

    def fwd():
        fused, _, _, _ = att.forward(feats, items, mask)
        return float((fused * w).sum())

    def bwd():
        fused, _, _, cache = att.forward(feats, items, mask)
        att.backward(w, None, cache)
        return fwd()

    _check(fwd, bwd, store)


def test_knowledge_attention_score_path_gradients():
    store = ParamStore(seed=16)
    rng = np.random.default_rng(17)
    att = KnowledgeAttention(store, "ka", query_dim=4, know_dim=6, hidden=5)
    feats = rng.standard_normal((2, 4))
    items = rng.standard_normal((2, 5, 6))
    mask = np.ones((2, 5), dtype=bool)
    mask[0, 3:] = False
    w = rng.standard_normal((2, 5)) * mask

    def fwd():
        _, _, scores, _ = att.forward(feats, items, mask)
        return float((np.where(mask, scores, 0.0) * w).sum())

    def bwd():
        _, _, _, cache = att.forward(feats, items, mask)
        att.backward(None, w, cache)
        return fwd()

    _check(fwd, bwd, store)


def test_knowledge_attention_masks_padded_items():
    store = ParamStore(seed=18)
    rng = np.random.default_rng(19)
    att = KnowledgeAttention(store, "ka", query_dim=3, know_dim=4, hidden=5)
    feats = rng.standard_normal((1, 3))
    items = rng.standard_normal((1, 4, 4))
    mask = np.array([[True, True, False, False]])
    _, probs, _, _ = att.forward(feats, items, mask)
    assert probs[0, 2:] == pytest.approx(0.0, abs=1e-12)
    assert probs.sum() == pytest.approx(1.0, rel=1e-12)


def test_hgfu_decoder_gradients_ragged():
    store = ParamStore(seed=20)
    rng = np.random.default_rng(21)
    dec = HgfuDecoder(store, "dec", emb_dim=5, know_dim=4, hidden=6,
                      vocab_size=9)
    emb = rng.standard_normal((3, 5, 5))
    kc = rng.standard_normal((3, 4))
    s0 = rng.standard_normal((3, 6))
    lengths = np.array([5, 3, 1])
    wl = rng.standard_normal((3, 5, 9))
    wst = rng.standard_normal((3, 5, 6))

    def fwd():
        logits, states, _ = dec.forward(emb, kc, lengths, s0)
        return float((logits * wl).sum() + (states * wst).sum())

    def bwd():
        logits, states, cache = dec.forward(emb, kc, lengths, s0)
        dec.backward(wl, cache, dstates=wst)
        return fwd()

    _check(fwd, bwd, store, samples=4)


def test_hgfu_step_matches_teacher_forced_first_state():
    store = ParamStore(seed=22)
    rng = np.random.default_rng(23)
    dec = HgfuDecoder(store, "dec", emb_dim=4, know_dim=3, hidden=5,
                      vocab_size=7)
    emb = rng.standard_normal((2, 3, 4))
    kc = rng.standard_normal((2, 3))
    s0 = rng.standard_normal((2, 5))
    logits_tf, states, _ = dec.forward(emb, kc, np.array([3, 3]), s0)
    logits_step, s1 = dec.step(emb[:, 0], kc, s0)
    np.testing.assert_allclose(s1, states[:, 0], atol=1e-12)
    np.testing.assert_allclose(logits_step, logits_tf[:, 0], atol=1e-12)
