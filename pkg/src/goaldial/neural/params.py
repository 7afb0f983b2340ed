"""Named parameters with accumulated gradients.

Every model owns one ParamStore; layers register parameters under
slash-separated names ("encoder/gru/uh") and accumulate into .grad during
the backward pass. The optimizer walks the store, so parameter creation
order is the only iteration order that matters (it is insertion order).
"""

import numpy as np


class Param:
    """A float64 array plus its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class ParamStore:
    """Insertion-ordered registry of Params, keyed by unique name."""

    def __init__(self, seed: int = 0):
        self._params: dict[str, Param] = {}
        self.rng = np.random.default_rng(seed)

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Param(name, value)
        self._params[name] = p
        return p

    def uniform(self, name: str, shape, scale: float = 0.08) -> Param:
        return self.add(name, self.rng.uniform(-scale, scale, size=shape))

    def normal(self, name: str, shape, std: float) -> Param:
        return self.add(name, self.rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, shape) -> Param:
        return self.add(name, np.zeros(shape))

    def constant(self, name: str, value) -> Param:
        return self.add(name, np.asarray(value, dtype=np.float64))

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def num_values(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(
                f"parameter name mismatch: missing={sorted(missing)} "
                f"extra={sorted(extra)}")
        for name, p in self._params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.value.shape:
                raise ValueError(
                    f"shape mismatch for {name}: "
                    f"stored {arr.shape}, expected {p.value.shape}")
            p.value[...] = arr
