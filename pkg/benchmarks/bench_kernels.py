"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Also times one full training epoch under each backend by reloading the
dispatch module with ``SIMDISTILL_PURE_PYTHON`` toggled.
"""

import argparse
import importlib
import os
import timeit

import numpy as np

from simdistill import _kernels_py

try:
    from simdistill import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    cases = []
    for b, n in ((256, 2048), (256, 4096)):
        st, ss = rng.uniform(-1, 1, (2, b, n))
        cases.append((f"softmax_kl_rows {b}x{n}", "softmax_kl_rows", (st, ss, 0.04)))
    for n in (40, 200):
        cases.append((f"hungarian_min {n}x{n}", "hungarian_min", (rng.random((n, n)),)))
    print(f"{'kernel':<28}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for label, name, args in cases:
        py = best_of(lambda: getattr(_kernels_py, name)(*args), repeat) * 1e3
        if _ckernels is None:
            print(f"{label:<28}{py:>10.2f}{'n/a':>11}")
            continue
        cy = best_of(lambda: getattr(_ckernels, name)(*args), repeat) * 1e3
        print(f"{label:<28}{py:>10.2f}{cy:>11.2f}{py / cy:>8.1f}x")


def bench_epoch():
    import simdistill.kernels
    from simdistill.data_io import SyntheticSpec, generate

    train, _ = generate(SyntheticSpec())
    timings = {}
    for backend, flag in (("numpy", "1"), ("cython", "0")):
        os.environ["SIMDISTILL_PURE_PYTHON"] = flag
        importlib.reload(simdistill.kernels)
        distill_mod = importlib.reload(importlib.import_module("simdistill.distill"))
        if simdistill.kernels.BACKEND != ("python" if flag == "1" else "cython"):
            continue
        cfg = distill_mod.DistillConfig(epochs=3)
        timings[backend] = best_of(lambda: distill_mod.distill(train, config=cfg), 1) / 3
    os.environ.pop("SIMDISTILL_PURE_PYTHON")
    importlib.reload(simdistill.kernels)
    for backend, sec in timings.items():
        print(f"ours-2q epoch ({backend}): {sec:.2f} s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--no-epoch", action="store_true", help="skip the training-epoch timing")
    args = parser.parse_args()
    bench_kernels(args.repeat)
    if not args.no_epoch:
        bench_epoch()


if __name__ == "__main__":
    main()
