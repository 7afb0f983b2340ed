"""Backend-dispatched recurrence kernels.

Callers see one interface; active_backend() picks the numba or numpy
implementation. Inputs are coerced to contiguous float64 (lengths to
int64) before dispatch so both paths see identical data.
"""

from dataclasses import dataclass

import numpy as np

from .backend import active_backend
from . import _kernels_numpy as _np_impl

_HGFU_KEYS = ("rw", "zw", "nw", "gnw", "rk", "zk", "nk", "gnk", "sw", "sk", "g")


def _numba_impl():
    from . import _kernels_numba as impl
    return impl


def _f64(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def _i64(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.int64))


@dataclass
class GruCache:
    h: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: np.ndarray
    ghn: np.ndarray
    lengths: np.ndarray
    h0: np.ndarray


def gru_forward(gx, lengths, uh, h0):
    """Returns (h, cache); h is (B, T, H), zero past each length."""
    gx, uh, h0 = _f64(gx), _f64(uh), _f64(h0)
    lengths = _i64(lengths)
    if active_backend() == "numba":
        h, r, z, n, ghn = _numba_impl().gru_forward(gx, lengths, uh, h0)
    else:
        h, r, z, n, ghn = _np_impl.gru_forward(gx, lengths, uh, h0)
    return h, GruCache(h, r, z, n, ghn, lengths, h0)


def gru_backward(dh_out, cache, uh):
    """Returns (dgx, duh, dh0) for upstream dh_out on every emitted state."""
    dh_out, uh = _f64(dh_out), _f64(uh)
    c = cache
    if active_backend() == "numba":
        return _numba_impl().gru_backward(dh_out, c.h, c.r, c.z, c.n, c.ghn,
                                          c.lengths, uh, c.h0)
    return _np_impl.gru_backward(dh_out, c.h, c.r, c.z, c.n, c.ghn,
                                 c.lengths, uh, c.h0)


@dataclass
class HgfuCache:
    s: np.ndarray
    parts: dict
    lengths: np.ndarray
    s0: np.ndarray


def hgfu_forward(gxw, gxk, lengths, uw, uk, wg, bg, s0):
    """Returns (s, cache); word cell is step-driven, knowledge cell sees the
    same gxk every step, an elementwise sigmoid gate fuses the two states."""
    gxw, gxk = _f64(gxw), _f64(gxk)
    uw, uk, wg, bg, s0 = _f64(uw), _f64(uk), _f64(wg), _f64(bg), _f64(s0)
    lengths = _i64(lengths)
    if active_backend() == "numba":
        out = _numba_impl().hgfu_forward(gxw, gxk, lengths, uw, uk, wg, bg, s0)
        s = out[0]
        parts = dict(zip(_HGFU_KEYS, out[1:]))
    else:
        s, parts = _np_impl.hgfu_forward(gxw, gxk, lengths, uw, uk, wg, bg, s0)
    return s, HgfuCache(s, parts, lengths, s0)


def hgfu_backward(ds_out, cache, uw, uk, wg):
    """Returns (dgxw, dgxk, duw, duk, dwg, dbg, ds0)."""
    ds_out = _f64(ds_out)
    uw, uk, wg = _f64(uw), _f64(uk), _f64(wg)
    c = cache
    if active_backend() == "numba":
        p = c.parts
        return _numba_impl().hgfu_backward(
            ds_out, c.s, p["rw"], p["zw"], p["nw"], p["gnw"],
            p["rk"], p["zk"], p["nk"], p["gnk"], p["sw"], p["sk"], p["g"],
            c.lengths, uw, uk, wg, c.s0)
    return _np_impl.hgfu_backward(ds_out, c.s, c.parts, c.lengths,
                                  uw, uk, wg, c.s0)
