"""Single-file .npz snapshots: every parameter by name plus a JSON metadata
blob under a reserved key. Loading validates names and shapes against the
receiving store before any value is written."""

import json

import numpy as np

from .params import ParamStore

_META_KEY = "__meta__"


def save_params(path, store: ParamStore, meta: dict | None = None) -> None:
    arrays = store.state_dict()
    if _META_KEY in arrays:
        raise ValueError(f"parameter name {_META_KEY!r} is reserved")
    arrays[_META_KEY] = np.frombuffer(
        json.dumps(meta or {}).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_params(path, store: ParamStore) -> dict:
    """Loads values into store (strict names/shapes) and returns the meta dict."""
    with np.load(path) as data:
        meta_raw = bytes(data[_META_KEY].tobytes()) if _META_KEY in data else b"{}"
        state = {k: data[k] for k in data.files if k != _META_KEY}
    store.load_state_dict(state)
    return json.loads(meta_raw.decode("utf-8"))


def peek_meta(path) -> dict:
    with np.load(path) as data:
        if _META_KEY not in data:
            return {}
        return json.loads(bytes(data[_META_KEY].tobytes()).decode("utf-8"))
