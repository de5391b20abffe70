"""Time the numba and numpy kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--T 200] [--L 20] [--V 60]

The first numba call (JIT compile or cache load) is timed separately.
"""

import argparse
import time

import numpy as np

from cslr.kernels import BACKENDS


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--T", type=int, default=200, help="frames per CTC call")
    ap.add_argument("--L", type=int, default=20, help="target length")
    ap.add_argument("--V", type=int, default=60, help="vocabulary size incl. blank")
    ap.add_argument("--calls", type=int, default=50, help="kernel calls per timing")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    logits = rng.normal(size=(args.calls, args.T, args.V))
    log_probs = logits - np.logaddexp.reduce(logits, axis=-1, keepdims=True)
    targets = [rng.integers(1, args.V, size=args.L) for _ in range(args.calls)]
    pairs = [(rng.integers(0, 30, size=rng.integers(10, 40)),
              rng.integers(0, 30, size=rng.integers(10, 40))) for _ in range(args.calls * 20)]

    if "numba" not in BACKENDS:
        print("numba backend unavailable (CSLR_DISABLE_NUMBA set or numba missing)")

    print(f"{'kernel':<22} {'backend':<7} {'first':>9} {'best':>9}")
    rows = {}
    for name, mod in BACKENDS.items():
        def run_ctc(mod=mod):
            for lp, tg in zip(log_probs, targets):
                mod.ctc_forward_backward(lp, tg, 0)

        def run_edit(mod=mod):
            for r, h in pairs:
                mod.edit_alignment(r, h)

        for label, fn in ((f"ctc T={args.T} L={args.L}", run_ctc), ("edit_alignment", run_edit)):
            t0 = time.perf_counter()
            fn()
            first = time.perf_counter() - t0
            best = _best(fn, args.repeat)
            rows[label, name] = best
            print(f"{label:<22} {name:<7} {first:>8.4f}s {best:>8.4f}s")

    if "numba" in BACKENDS:
        for label in sorted({k[0] for k in rows}):
            print(f"speedup {label}: {rows[label, 'numpy'] / rows[label, 'numba']:.1f}x")
        a = BACKENDS["numba"].ctc_forward_backward(log_probs[0], targets[0], 0)
        b = BACKENDS["numpy"].ctc_forward_backward(log_probs[0], targets[0], 0)
        print(f"max |loss diff| {abs(a[0] - b[0]):.2e}, max |grad diff| {np.abs(a[1] - b[1]).max():.2e}")


if __name__ == "__main__":
    main()
