"""Head-to-head timing of the recurrence kernels: numba JIT vs pure numpy.

Runs each kernel at desk-scale and paper-scale shapes, forward alone and
forward+backward, and prints a table with the median wall time per call and
the speedup. The first numba call compiles; compilation happens during
warmup and is excluded from the timings.

    python3 benchmarks/bench_kernels.py [--repeats 7] [--batch 16]
"""
import argparse
import statistics
import time

import numpy as np

from goaldial.neural import backend, kernels


def _gru_inputs(rng, B, T, H):
    gx = rng.standard_normal((B, T, 3 * H))
    lengths = rng.integers(T // 2, T + 1, size=B)
    uh = rng.standard_normal((3 * H, H)) * 0.1
    h0 = rng.standard_normal((B, H))
    return gx, lengths, uh, h0


def _hgfu_inputs(rng, B, T, H):
    gxw = rng.standard_normal((B, T, 3 * H))
    gxk = rng.standard_normal((B, 3 * H))
    lengths = rng.integers(T // 2, T + 1, size=B)
    uw = rng.standard_normal((3 * H, H)) * 0.1
    uk = rng.standard_normal((3 * H, H)) * 0.1
    wg = rng.standard_normal((H, 2 * H)) * 0.1
    bg = rng.standard_normal(H)
    s0 = rng.standard_normal((B, H))
    return gxw, gxk, lengths, uw, uk, wg, bg, s0


def _cases(B):
    rng = np.random.default_rng(0)
    cases = []
    for T, H, tag in ((64, 48, "desk"), (256, 400, "paper")):
        gru_in = _gru_inputs(rng, B, T, H)
        dh = rng.standard_normal((B, T, H))

        def gru_fwd(args=gru_in):
            kernels.gru_forward(*args)

        def gru_both(args=gru_in, dh=dh):
            h, cache = kernels.gru_forward(*args)
            kernels.gru_backward(dh, cache, args[2])

        cases.append((f"gru fwd      {tag} B{B} T{T} H{H}", gru_fwd))
        cases.append((f"gru fwd+bwd  {tag} B{B} T{T} H{H}", gru_both))

        hg_in = _hgfu_inputs(rng, B, T, H)
        ds = rng.standard_normal((B, T, H))

        def hgfu_fwd(args=hg_in):
            kernels.hgfu_forward(*args)

        def hgfu_both(args=hg_in, ds=ds):
            s, cache = kernels.hgfu_forward(*args)
            kernels.hgfu_backward(ds, cache, args[3], args[4], args[5])

        cases.append((f"hgfu fwd     {tag} B{B} T{T} H{H}", hgfu_fwd))
        cases.append((f"hgfu fwd+bwd {tag} B{B} T{T} H{H}", hgfu_both))
    return cases


def _time(fn, repeats):
    fn()  # warmup; includes JIT compilation on the numba path
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--batch", type=int, default=16)
    args = parser.parse_args()

    try:
        import numba  # noqa: F401
    except ImportError:
        print("numba is not importable; nothing to compare")
        return 1

    cases = _cases(args.batch)
    width = max(len(name) for name, _ in cases)
    print(f"{'kernel / shape':<{width}}  {'numpy':>10}  {'numba':>10}  "
          f"{'speedup':>8}")
    for name, fn in cases:
        backend.set_backend("numpy")
        t_np = _time(fn, args.repeats)
        backend.set_backend("numba")
        t_nb = _time(fn, args.repeats)
        print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  "
              f"{t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
