"""Compare the numba and numpy kernel backends on realistic array sizes.

Usage::

    python benchmarks/bench_kernels.py [--radius 10] [--repeat 5]

Both backends are run on the same inputs; the script checks that results agree
and prints the median wall time of each kernel.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from glab import _kernels
from glab.groups import BallIndex, FreeGroup, Lattice


def _time(fn, repeat: int) -> float:
    fn()  # warm-up (includes numba compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_conv(group, L: int, repeat: int) -> dict:
    ball = BallIndex(group, L)
    gens = group.generators()
    tables = ball.right_tables(gens)
    probs = np.full(len(gens), 1.0 / len(gens))
    v = np.random.default_rng(0).random(ball.size)
    res = {}
    outs = {}
    for impl in (_kernels.numpy_impl, _kernels.numba_impl):
        out = np.empty(ball.size)
        res[impl.name] = _time(lambda: impl.conv_gather(v, tables, probs, out), repeat)
        outs[impl.name] = out.copy()
    err = float(np.abs(outs["numpy"] - outs["numba"]).max())
    return {"kernel": "conv_gather", "size": ball.size, **res, "max_abs_diff": err}


def bench_forward(group, L: int, symbols: int, repeat: int) -> dict:
    ball = BallIndex(group, L)
    gens = group.generators()[:symbols]
    tables = ball.right_tables(gens)
    lab = np.arange(len(gens), dtype=np.int64)
    E = np.ones((len(gens), len(gens)))
    active = int(ball.count_upto[L - 1])
    v = np.zeros((len(gens), ball.size))
    v[:, :active] = np.random.default_rng(1).random((len(gens), active))
    res, outs = {}, {}
    for impl in (_kernels.numpy_impl, _kernels.numba_impl):
        out = np.zeros_like(v)

        def run():
            out[:] = 0.0
            impl.ext_forward(v, E, lab, tables, active, out)

        res[impl.name] = _time(run, repeat)
        outs[impl.name] = out.copy()
    err = float(np.abs(outs["numpy"] - outs["numba"]).max())
    return {"kernel": "ext_forward", "size": v.size, **res, "max_abs_diff": err}


def bench_adjoint(group, L: int, symbols: int, repeat: int) -> dict:
    ball = BallIndex(group, L)
    gens = group.generators()[:symbols]
    tables = ball.right_tables(gens)
    lab = np.arange(len(gens), dtype=np.int64)
    E = np.ones((len(gens), len(gens)))
    w = np.random.default_rng(2).random((len(gens), ball.size))
    res, outs = {}, {}
    for impl in (_kernels.numpy_impl, _kernels.numba_impl):
        out = np.zeros_like(w)

        def run():
            out[:] = 0.0
            impl.ext_adjoint(w, E, lab, tables, ball.size, out)

        res[impl.name] = _time(run, repeat)
        outs[impl.name] = out.copy()
    err = float(np.abs(outs["numpy"] - outs["numba"]).max())
    return {"kernel": "ext_adjoint", "size": w.size, **res, "max_abs_diff": err}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--radius", type=int, default=10, help="free-group ball radius")
    ap.add_argument("--lattice-radius", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels.numba_impl is None:
        print("numba unavailable; nothing to compare")
        return 1
    F2, Z2 = FreeGroup(2), Lattice(2)
    rows = [
        bench_conv(F2, args.radius, args.repeat),
        bench_conv(Z2, args.lattice_radius, args.repeat),
        bench_forward(F2, args.radius, 4, args.repeat),
        bench_adjoint(F2, args.radius, 4, args.repeat),
    ]
    print(f"{'kernel':<12} {'size':>10} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8} {'max|diff|':>10}")
    for r in rows:
        print(f"{r['kernel']:<12} {r['size']:>10} {r['numpy']:>11.5f} {r['numba']:>11.5f} "
              f"{r['numpy'] / r['numba']:>8.1f} {r['max_abs_diff']:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
