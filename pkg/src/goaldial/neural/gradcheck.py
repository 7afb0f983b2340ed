"""Central-difference gradient verification.

Perturbs sampled parameter entries by +-eps, compares the numeric slope to
the accumulated analytic gradient, and reports the worst relative error
|a - n| / max(|a| + |n|, floor). The floor keeps near-zero pairs from
blowing up the ratio. Forward passes must be deterministic while a check
runs (no live dropout).
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_err: float
    checked: int
    tol: float
    worst: list = field(default_factory=list)  # (name, flat_index, analytic, numeric, rel)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def __str__(self):
        head = (f"gradcheck: {'PASS' if self.passed else 'FAIL'} "
                f"max_rel={self.max_rel_err:.3e} over {self.checked} entries "
                f"(tol {self.tol:g})")
        lines = [head]
        for name, idx, a, n, rel in self.worst[:5]:
            lines.append(f"  {name}[{idx}] analytic={a:.6e} numeric={n:.6e} rel={rel:.3e}")
        return "\n".join(lines)


def grad_check(loss_fn, grad_fn, store, *, eps: float = 1e-5,
               tol: float = 1e-4, samples_per_param: int = 6,
               seed: int = 0, floor: float = 1e-3) -> GradCheckReport:
    """loss_fn() -> float must be a pure forward pass; grad_fn() -> float
    must run forward + backward, leaving gradients in the store."""
    store.zero_grad()
    grad_fn()
    analytic = {p.name: p.grad.copy() for p in store}
    rng = np.random.default_rng(seed)
    entries = []
    max_rel = 0.0
    checked = 0
    for p in store:
        flat = p.value.reshape(-1)
        n = flat.size
        if n <= samples_per_param:
            idxs = np.arange(n)
        else:
            idxs = rng.choice(n, size=samples_per_param, replace=False)
        aflat = analytic[p.name].reshape(-1)
        for i in idxs:
            old = flat[i]
            flat[i] = old + eps
            up = loss_fn()
            flat[i] = old - eps
            down = loss_fn()
            flat[i] = old
            numeric = (up - down) / (2.0 * eps)
            a = aflat[i]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), floor)
            entries.append((p.name, int(i), float(a), float(numeric), float(rel)))
            max_rel = max(max_rel, rel)
            checked += 1
    entries.sort(key=lambda e: -e[4])
    return GradCheckReport(max_rel_err=float(max_rel), checked=checked,
                           tol=tol, worst=entries)
