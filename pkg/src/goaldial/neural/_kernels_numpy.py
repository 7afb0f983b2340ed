"""Pure-numpy recurrence kernels: time-step loop, vectorized over the batch.

Reference semantics for the numba kernels. All arrays are float64; `gx`
carries precomputed input projections (x @ W.T + b) with gate order
(reset, update, candidate). Outputs and caches are zero past each row's
length.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_forward(gx, lengths, uh, h0):
    """Run a GRU over padded input projections.

    gx: (B, T, 3H), lengths: (B,), uh: (3H, H), h0: (B, H).
    Returns (h, r, z, n, ghn), each (B, T, H); h[b, t] is the state after
    step t, caches feed gru_backward.
    """
    B, T, H3 = gx.shape
    H = H3 // 3
    h = np.zeros((B, T, H))
    r = np.zeros((B, T, H))
    z = np.zeros((B, T, H))
    n = np.zeros((B, T, H))
    ghn = np.zeros((B, T, H))
    hprev = h0.copy()
    for t in range(T):
        m = (lengths > t)[:, None]
        gh = hprev @ uh.T
        rt = _sigmoid(gx[:, t, :H] + gh[:, :H])
        zt = _sigmoid(gx[:, t, H:2 * H] + gh[:, H:2 * H])
        gnt = gh[:, 2 * H:]
        nt = np.tanh(gx[:, t, 2 * H:] + rt * gnt)
        ht = (1.0 - zt) * nt + zt * hprev
        r[:, t] = np.where(m, rt, 0.0)
        z[:, t] = np.where(m, zt, 0.0)
        n[:, t] = np.where(m, nt, 0.0)
        ghn[:, t] = np.where(m, gnt, 0.0)
        h[:, t] = np.where(m, ht, 0.0)
        hprev = np.where(m, ht, hprev)
    return h, r, z, n, ghn


def gru_backward(dh_out, h, r, z, n, ghn, lengths, uh, h0):
    """Backward through time for gru_forward.

    dh_out: (B, T, H) upstream gradients on each emitted state.
    Returns (dgx, duh, dh0).
    """
    B, T, H = h.shape
    dgx = np.zeros((B, T, 3 * H))
    duh = np.zeros_like(uh)
    carry = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        active = (lengths > t)[:, None]
        dh = np.where(active, dh_out[:, t] + carry, 0.0)
        hprev = h[:, t - 1] if t > 0 else h0
        rt, zt, nt, gnt = r[:, t], z[:, t], n[:, t], ghn[:, t]
        dn = dh * (1.0 - zt)
        dz = dh * (hprev - nt)
        dhp = dh * zt
        dan = dn * (1.0 - nt * nt)
        dr = dan * gnt
        dgn = dan * rt
        dar = dr * rt * (1.0 - rt)
        daz = dz * zt * (1.0 - zt)
        dgx[:, t, :H] = dar
        dgx[:, t, H:2 * H] = daz
        dgx[:, t, 2 * H:] = dan
        dgh = np.concatenate([dar, daz, dgn], axis=1)
        duh += dgh.T @ hprev
        dhp = dhp + dgh @ uh
        carry = np.where(active, dhp, carry)
    return dgx, duh, carry


def hgfu_forward(gxw, gxk, lengths, uw, uk, wg, bg, s0):
    """Gated-fusion decoder recurrence: word cell + knowledge cell + gate.

    gxw: (B, T, 3H) per-step word-input projections; gxk: (B, 3H) constant
    knowledge-input projection; wg: (H, 2H), bg: (H,).
    Returns (s, cache) where s is (B, T, H) fused states and cache holds the
    eleven per-step arrays the backward pass needs.
    """
    B, T, H3 = gxw.shape
    H = H3 // 3
    s = np.zeros((B, T, H))
    names = ("rw", "zw", "nw", "gnw", "rk", "zk", "nk", "gnk", "sw", "sk", "g")
    cache = {k: np.zeros((B, T, H)) for k in names}
    sprev = s0.copy()
    for t in range(T):
        m = (lengths > t)[:, None]
        ghw = sprev @ uw.T
        ghk = sprev @ uk.T
        rw = _sigmoid(gxw[:, t, :H] + ghw[:, :H])
        zw = _sigmoid(gxw[:, t, H:2 * H] + ghw[:, H:2 * H])
        gnw = ghw[:, 2 * H:]
        nw = np.tanh(gxw[:, t, 2 * H:] + rw * gnw)
        sw = (1.0 - zw) * nw + zw * sprev
        rk = _sigmoid(gxk[:, :H] + ghk[:, :H])
        zk = _sigmoid(gxk[:, H:2 * H] + ghk[:, H:2 * H])
        gnk = ghk[:, 2 * H:]
        nk = np.tanh(gxk[:, 2 * H:] + rk * gnk)
        sk = (1.0 - zk) * nk + zk * sprev
        g = _sigmoid(np.concatenate([sw, sk], axis=1) @ wg.T + bg)
        st = g * sw + (1.0 - g) * sk
        for key, val in (("rw", rw), ("zw", zw), ("nw", nw), ("gnw", gnw),
                         ("rk", rk), ("zk", zk), ("nk", nk), ("gnk", gnk),
                         ("sw", sw), ("sk", sk), ("g", g)):
            cache[key][:, t] = np.where(m, val, 0.0)
        s[:, t] = np.where(m, st, 0.0)
        sprev = np.where(m, st, sprev)
    return s, cache


def hgfu_backward(ds_out, s, cache, lengths, uw, uk, wg, s0):
    """Backward through time for hgfu_forward.

    Returns (dgxw, dgxk, duw, duk, dwg, dbg, ds0).
    """
    B, T, H = s.shape
    dgxw = np.zeros((B, T, 3 * H))
    dgxk = np.zeros((B, 3 * H))
    duw = np.zeros_like(uw)
    duk = np.zeros_like(uk)
    dwg = np.zeros_like(wg)
    dbg = np.zeros(H)
    carry = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        active = (lengths > t)[:, None]
        ds = np.where(active, ds_out[:, t] + carry, 0.0)
        sprev = s[:, t - 1] if t > 0 else s0
        sw, sk, g = cache["sw"][:, t], cache["sk"][:, t], cache["g"][:, t]
        dg = ds * (sw - sk)
        dsw = ds * g
        dsk = ds * (1.0 - g)
        dag = dg * g * (1.0 - g)
        dbg += dag.sum(axis=0)
        dwg += dag.T @ np.concatenate([sw, sk], axis=1)
        dcat = dag @ wg
        dsw = dsw + dcat[:, :H]
        dsk = dsk + dcat[:, H:]

        rw, zw, nw, gnw = (cache[k][:, t] for k in ("rw", "zw", "nw", "gnw"))
        dn = dsw * (1.0 - zw)
        dz = dsw * (sprev - nw)
        dsp = dsw * zw
        dan = dn * (1.0 - nw * nw)
        dr = dan * gnw
        dgn = dan * rw
        dar = dr * rw * (1.0 - rw)
        daz = dz * zw * (1.0 - zw)
        dgxw[:, t, :H] = dar
        dgxw[:, t, H:2 * H] = daz
        dgxw[:, t, 2 * H:] = dan
        dgh = np.concatenate([dar, daz, dgn], axis=1)
        duw += dgh.T @ sprev
        dsp = dsp + dgh @ uw

        rk, zk, nk, gnk = (cache[k][:, t] for k in ("rk", "zk", "nk", "gnk"))
        dn = dsk * (1.0 - zk)
        dz = dsk * (sprev - nk)
        dsp = dsp + dsk * zk
        dan = dn * (1.0 - nk * nk)
        dr = dan * gnk
        dgn = dan * rk
        dar = dr * rk * (1.0 - rk)
        daz = dz * zk * (1.0 - zk)
        dgkt = np.concatenate([dar, daz, dan], axis=1)
        dgxk += np.where(active, dgkt, 0.0)
        dgh = np.concatenate([dar, daz, dgn], axis=1)
        duk += dgh.T @ sprev
        dsp = dsp + dgh @ uk

        carry = np.where(active, dsp, carry)
    return dgxw, dgxk, duw, duk, dwg, dbg, carry
