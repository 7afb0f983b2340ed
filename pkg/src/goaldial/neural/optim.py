"""Adam with bias correction, global-norm clipping, and decoupled weight
decay applied to matrix-shaped parameters only (biases, gains, and embedding
rows the decay would distort are all 1-d)."""

import numpy as np

from .params import ParamStore


def global_grad_norm(store: ParamStore) -> float:
    total = 0.0
    for p in store:
        total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_global_norm(store: ParamStore, max_norm: float) -> float:
    """Scales all gradients so the global norm is at most max_norm.
    Returns the pre-clip norm."""
    norm = global_grad_norm(store)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in store:
            p.grad *= scale
    return norm


class Adam:
    def __init__(self, store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {p.name: np.zeros_like(p.value) for p in store}
        self._v = {p.name: np.zeros_like(p.value) for p in store}

    def step(self, lr_scale: float = 1.0) -> None:
        self.t += 1
        lr = self.lr * lr_scale
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.store:
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay > 0.0 and p.value.ndim >= 2:
                update = update + self.weight_decay * p.value
            p.value -= lr * update


def warmup_linear_decay(step: int, total_steps: int,
                        warmup_frac: float = 0.1) -> float:
    """lr multiplier: 0 -> 1 over the warmup span, then 1 -> 0 linearly.
    step is 0-based; the multiplier at step 0 is nonzero so training moves."""
    total_steps = max(total_steps, 1)
    warmup = max(int(total_steps * warmup_frac), 1)
    if step < warmup:
        return (step + 1) / warmup
    rest = max(total_steps - warmup, 1)
    return max(0.0, 1.0 - (step + 1 - warmup) / rest)
