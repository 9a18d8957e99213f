"""Compare the compiled kernels against the pure-Python fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from exitkit._kernels import _pykernels

try:
    from exitkit._kernels import _ckernels
except ImportError:
    _ckernels = None


def best_of(repeat, fn, *args):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def smooth_inputs(n, distinct, seed):
    gen = np.random.default_rng(seed)
    conf = gen.choice(np.linspace(0.0, 1.0, distinct), size=n)
    weight = (gen.uniform(size=n) < 0.5).astype(np.float64)
    order = np.argsort(conf, kind="stable")
    cs = conf[order]
    ws = weight[order]
    starts = np.empty(n, dtype=bool)
    starts[0] = True
    starts[1:] = cs[1:] != cs[:-1]
    run_start = np.flatnonzero(starts).astype(np.int64)
    run_end = np.append(run_start[1:], n).astype(np.int64)
    return (
        cs,
        ws,
        np.ascontiguousarray(order, dtype=np.int64),
        run_start,
        np.ascontiguousarray(run_end),
        np.ascontiguousarray(cs[run_start]),
        np.ascontiguousarray(np.add.reduceat(ws, run_start), dtype=np.float64),
        (np.cumsum(starts) - 1).astype(np.int64),
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-smooth", type=int, default=50_000)
    parser.add_argument("--h", type=int, default=150)
    parser.add_argument("--distinct", type=int, default=301,
                        help="distinct confidence values (controls run lengths)")
    parser.add_argument("--n-exceed", type=int, default=1_000_000)
    parser.add_argument("--layers", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled kernels are not built; showing pure Python only")

    rows = []

    gen = np.random.default_rng(args.seed)
    scores = gen.uniform(size=(args.n_exceed, args.layers - 1))
    t_py, out_py = best_of(args.repeat, _pykernels.first_exceed, scores, 0.7)
    rows.append(("first_exceed", f"{args.n_exceed}x{args.layers - 1}", t_py, None))
    if _ckernels is not None:
        t_cy, out_cy = best_of(args.repeat, _ckernels.first_exceed, scores, 0.7)
        assert np.array_equal(out_py, out_cy)
        rows[-1] = rows[-1][:3] + (t_cy,)

    smooth = smooth_inputs(args.n_smooth, args.distinct, args.seed)
    t_py, out_py = best_of(1, _pykernels.smooth_sorted, *smooth, args.h)
    rows.append(
        ("smooth_sorted", f"n={args.n_smooth} h={args.h}", t_py, None)
    )
    if _ckernels is not None:
        t_cy, out_cy = best_of(args.repeat, _ckernels.smooth_sorted, *smooth, args.h)
        assert out_py.tolist() == out_cy.tolist()
        rows[-1] = rows[-1][:3] + (t_cy,)

    print(f"{'kernel':<14} {'workload':<22} {'python':>10} {'cython':>10} {'speedup':>8}")
    for name, workload, t_py, t_cy in rows:
        if t_cy is None:
            print(f"{name:<14} {workload:<22} {t_py:>9.4f}s {'-':>10} {'-':>8}")
        else:
            print(
                f"{name:<14} {workload:<22} {t_py:>9.4f}s {t_cy:>9.4f}s "
                f"{t_py / t_cy:>7.1f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
