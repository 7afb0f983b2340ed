"""Recurrence-kernel backend selection.

The hot inner loops (GRU and gated-fusion decoder recurrences) exist twice:
numba-jitted explicit loops and a pure-numpy fallback vectorized over the
batch. `GOALDIAL_BACKEND` picks one:

  auto  (default)  numba when importable, else numpy
  numba            require numba, raise if missing
  numpy            never import numba

Compiled results of the two paths agree to floating-point reassociation
(tests compare at 1e-10); benchmarks/bench_kernels.py times them head to head.
"""

import os

from ..errors import ConfigError

_VALID = ("auto", "numba", "numpy")
_resolved: str | None = None


def _requested() -> str:
    value = os.environ.get("GOALDIAL_BACKEND", "auto").lower()
    if value not in _VALID:
        raise ConfigError(f"GOALDIAL_BACKEND must be one of {_VALID}, got {value!r}")
    return value


def active_backend() -> str:
    """Resolve (once) which kernel backend this process uses."""
    global _resolved
    if _resolved is None:
        req = _requested()
        if req == "numpy":
            _resolved = "numpy"
        else:
            try:
                import numba  # noqa: F401
                _resolved = "numba"
            except ImportError:
                if req == "numba":
                    raise ConfigError("GOALDIAL_BACKEND=numba but numba is not importable")
                _resolved = "numpy"
    return _resolved


def set_backend(name: str) -> None:
    """Force the backend for the current process (tests and benchmarks)."""
    global _resolved
    if name not in ("numba", "numpy"):
        raise ConfigError(f"backend must be numba or numpy, got {name!r}")
    _resolved = name
