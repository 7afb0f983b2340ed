"""Numba-compiled recurrence kernels.

Same contracts as _kernels_numpy. Each time step does its recurrent
projections as one batched BLAS matmul (np.dot under numba) and the gate
math as fused elementwise loops, so large hidden sizes ride BLAS while the
nonlinearities compile to tight machine code with no per-step temporaries.
Padded steps are skipped per row (lengths-aware), outputs stay zero there.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True)
def gru_forward(gx, lengths, uh, h0):
    B, T, H3 = gx.shape
    H = H3 // 3
    h = np.zeros((B, T, H))
    r = np.zeros((B, T, H))
    z = np.zeros((B, T, H))
    n = np.zeros((B, T, H))
    ghn = np.zeros((B, T, H))
    uhT = np.ascontiguousarray(uh.T)
    hprev = h0.copy()
    for t in range(T):
        gh = np.dot(hprev, uhT)
        for b in range(B):
            if lengths[b] > t:
                for i in range(H):
                    ri = _sigmoid(gx[b, t, i] + gh[b, i])
                    zi = _sigmoid(gx[b, t, H + i] + gh[b, H + i])
                    gn = gh[b, 2 * H + i]
                    ni = np.tanh(gx[b, t, 2 * H + i] + ri * gn)
                    r[b, t, i] = ri
                    z[b, t, i] = zi
                    n[b, t, i] = ni
                    ghn[b, t, i] = gn
                    h[b, t, i] = (1.0 - zi) * ni + zi * hprev[b, i]
                for i in range(H):
                    hprev[b, i] = h[b, t, i]
    return h, r, z, n, ghn


@njit(cache=True)
def gru_backward(dh_out, h, r, z, n, ghn, lengths, uh, h0):
    B, T, H = h.shape
    dgx = np.zeros((B, T, 3 * H))
    duh = np.zeros((3 * H, H))
    carry = np.zeros((B, H))
    # dgh in both layouts: (B, 3H) rides BLAS into carry, (3H, B) into duh
    dgh = np.zeros((B, 3 * H))
    dghT = np.zeros((3 * H, B))
    hp = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            active = lengths[b] > t
            for i in range(H):
                hpi = h[b, t - 1, i] if t > 0 else h0[b, i]
                hp[b, i] = hpi if active else 0.0
                if not active:
                    dgh[b, i] = 0.0
                    dgh[b, H + i] = 0.0
                    dgh[b, 2 * H + i] = 0.0
                    dghT[i, b] = 0.0
                    dghT[H + i, b] = 0.0
                    dghT[2 * H + i, b] = 0.0
                    continue
                dh = dh_out[b, t, i] + carry[b, i]
                ri = r[b, t, i]
                zi = z[b, t, i]
                ni = n[b, t, i]
                gn = ghn[b, t, i]
                dn = dh * (1.0 - zi)
                dz = dh * (hpi - ni)
                dan = dn * (1.0 - ni * ni)
                dr = dan * gn
                dgn = dan * ri
                dar = dr * ri * (1.0 - ri)
                daz = dz * zi * (1.0 - zi)
                dgx[b, t, i] = dar
                dgx[b, t, H + i] = daz
                dgx[b, t, 2 * H + i] = dan
                dgh[b, i] = dar
                dgh[b, H + i] = daz
                dgh[b, 2 * H + i] = dgn
                dghT[i, b] = dar
                dghT[H + i, b] = daz
                dghT[2 * H + i, b] = dgn
                carry[b, i] = dh * zi
        duh += np.dot(dghT, hp)
        dhp = np.dot(dgh, uh)
        for b in range(B):
            if lengths[b] > t:
                for i in range(H):
                    carry[b, i] += dhp[b, i]
    return dgx, duh, carry


@njit(cache=True)
def hgfu_forward(gxw, gxk, lengths, uw, uk, wg, bg, s0):
    B, T, H3 = gxw.shape
    H = H3 // 3
    s = np.zeros((B, T, H))
    rw = np.zeros((B, T, H))
    zw = np.zeros((B, T, H))
    nw = np.zeros((B, T, H))
    gnw = np.zeros((B, T, H))
    rk = np.zeros((B, T, H))
    zk = np.zeros((B, T, H))
    nk = np.zeros((B, T, H))
    gnk = np.zeros((B, T, H))
    sw = np.zeros((B, T, H))
    sk = np.zeros((B, T, H))
    g = np.zeros((B, T, H))
    uwT = np.ascontiguousarray(uw.T)
    ukT = np.ascontiguousarray(uk.T)
    wgwT = np.ascontiguousarray(wg[:, :H].T)
    wgkT = np.ascontiguousarray(wg[:, H:].T)
    sprev = s0.copy()
    swt = np.zeros((B, H))
    skt = np.zeros((B, H))
    for t in range(T):
        ghw = np.dot(sprev, uwT)
        ghk = np.dot(sprev, ukT)
        for b in range(B):
            if lengths[b] <= t:
                for i in range(H):
                    swt[b, i] = 0.0
                    skt[b, i] = 0.0
                continue
            for i in range(H):
                ri = _sigmoid(gxw[b, t, i] + ghw[b, i])
                zi = _sigmoid(gxw[b, t, H + i] + ghw[b, H + i])
                gn = ghw[b, 2 * H + i]
                ni = np.tanh(gxw[b, t, 2 * H + i] + ri * gn)
                rw[b, t, i] = ri
                zw[b, t, i] = zi
                nw[b, t, i] = ni
                gnw[b, t, i] = gn
                swt[b, i] = (1.0 - zi) * ni + zi * sprev[b, i]
                sw[b, t, i] = swt[b, i]
                ri = _sigmoid(gxk[b, i] + ghk[b, i])
                zi = _sigmoid(gxk[b, H + i] + ghk[b, H + i])
                gn = ghk[b, 2 * H + i]
                ni = np.tanh(gxk[b, 2 * H + i] + ri * gn)
                rk[b, t, i] = ri
                zk[b, t, i] = zi
                nk[b, t, i] = ni
                gnk[b, t, i] = gn
                skt[b, i] = (1.0 - zi) * ni + zi * sprev[b, i]
                sk[b, t, i] = skt[b, i]
        aw = np.dot(swt, wgwT)
        ak = np.dot(skt, wgkT)
        for b in range(B):
            if lengths[b] > t:
                for i in range(H):
                    gi = _sigmoid(aw[b, i] + ak[b, i] + bg[i])
                    g[b, t, i] = gi
                    st = gi * sw[b, t, i] + (1.0 - gi) * sk[b, t, i]
                    s[b, t, i] = st
                    sprev[b, i] = st
    return s, rw, zw, nw, gnw, rk, zk, nk, gnk, sw, sk, g


@njit(cache=True)
def hgfu_backward(ds_out, s, rw, zw, nw, gnw, rk, zk, nk, gnk, sw, sk, g,
                  lengths, uw, uk, wg, s0):
    B, T, H = s.shape
    dgxw = np.zeros((B, T, 3 * H))
    dgxk = np.zeros((B, 3 * H))
    duw = np.zeros((3 * H, H))
    duk = np.zeros((3 * H, H))
    dwg = np.zeros((H, 2 * H))
    dbg = np.zeros(H)
    carry = np.zeros((B, H))
    dag = np.zeros((B, H))
    dagT = np.zeros((H, B))
    dsw = np.zeros((B, H))
    dsk = np.zeros((B, H))
    sp = np.zeros((B, H))
    dghw = np.zeros((B, 3 * H))
    dghwT = np.zeros((3 * H, B))
    dghk = np.zeros((B, 3 * H))
    dghkT = np.zeros((3 * H, B))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            active = lengths[b] > t
            for i in range(H):
                if not active:
                    dag[b, i] = 0.0
                    dagT[i, b] = 0.0
                    dsw[b, i] = 0.0
                    dsk[b, i] = 0.0
                    continue
                ds = ds_out[b, t, i] + carry[b, i]
                gi = g[b, t, i]
                d = ds * (sw[b, t, i] - sk[b, t, i]) * gi * (1.0 - gi)
                dbg[i] += d
                dag[b, i] = d
                dagT[i, b] = d
                dsw[b, i] = ds * gi
                dsk[b, i] = ds * (1.0 - gi)
        # gate weight grads and the fused-state gradients through the gate
        swt = np.ascontiguousarray(sw[:, t])
        skt = np.ascontiguousarray(sk[:, t])
        dwg[:, :H] += np.dot(dagT, swt)
        dwg[:, H:] += np.dot(dagT, skt)
        dcat = np.dot(dag, wg)
        for b in range(B):
            active = lengths[b] > t
            for i in range(H):
                if active:
                    dsw[b, i] += dcat[b, i]
                    dsk[b, i] += dcat[b, H + i]
                sp[b, i] = (s[b, t - 1, i] if t > 0 else s0[b, i]) \
                    if active else 0.0
            if not active:
                for i in range(3 * H):
                    dghw[b, i] = 0.0
                    dghwT[i, b] = 0.0
                    dghk[b, i] = 0.0
                    dghkT[i, b] = 0.0
                continue
            for i in range(H):
                dn = dsw[b, i] * (1.0 - zw[b, t, i])
                dz = dsw[b, i] * (sp[b, i] - nw[b, t, i])
                dan = dn * (1.0 - nw[b, t, i] * nw[b, t, i])
                dr = dan * gnw[b, t, i]
                dgn = dan * rw[b, t, i]
                dar = dr * rw[b, t, i] * (1.0 - rw[b, t, i])
                daz = dz * zw[b, t, i] * (1.0 - zw[b, t, i])
                dgxw[b, t, i] = dar
                dgxw[b, t, H + i] = daz
                dgxw[b, t, 2 * H + i] = dan
                dghw[b, i] = dar
                dghw[b, H + i] = daz
                dghw[b, 2 * H + i] = dgn
                dghwT[i, b] = dar
                dghwT[H + i, b] = daz
                dghwT[2 * H + i, b] = dgn
                carry[b, i] = dsw[b, i] * zw[b, t, i] \
                    + dsk[b, i] * zk[b, t, i]
                dn = dsk[b, i] * (1.0 - zk[b, t, i])
                dz = dsk[b, i] * (sp[b, i] - nk[b, t, i])
                dan = dn * (1.0 - nk[b, t, i] * nk[b, t, i])
                dr = dan * gnk[b, t, i]
                dgn = dan * rk[b, t, i]
                dar = dr * rk[b, t, i] * (1.0 - rk[b, t, i])
                daz = dz * zk[b, t, i] * (1.0 - zk[b, t, i])
                dgxk[b, i] += dar
                dgxk[b, H + i] += daz
                dgxk[b, 2 * H + i] += dan
                dghk[b, i] = dar
                dghk[b, H + i] = daz
                dghk[b, 2 * H + i] = dgn
                dghkT[i, b] = dar
                dghkT[H + i, b] = daz
                dghkT[2 * H + i, b] = dgn
        duw += np.dot(dghwT, sp)
        duk += np.dot(dghkT, sp)
        dspw = np.dot(dghw, uw)
        dspk = np.dot(dghk, uk)
        for b in range(B):
            if lengths[b] > t:
                for i in range(H):
                    carry[b, i] += dspw[b, i] + dspk[b, i]
    return dgxw, dgxk, duw, duk, dwg, dbg, carry
