"""Hand-rolled neural substrate: parameter store, layers with explicit
backward passes, losses, Adam, finite-difference checking, and the
numba/numpy kernel pair behind the recurrent blocks."""

from .backend import active_backend, set_backend
from .params import Param, ParamStore

__all__ = ["active_backend", "set_backend", "Param", "ParamStore"]
