"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time for each backend and the
speedup. Results are also checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from privgcn import kernels


def cases(rng):
    n, c = 20_000, 8
    M = rng.normal(scale=3, size=(n, c))
    Y = np.eye(c)[rng.integers(0, c, size=n)]
    x = rng.normal(scale=5, size=200_000)
    y = (rng.random(x.size) < 0.5).astype(float)
    nodes = 2_000
    iu, ju = np.triu_indices(nodes, k=1)
    keep = rng.random(iu.size) < 0.005
    edges = np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)
    A, B = rng.normal(size=(5_000, 64)), rng.normal(size=(5_000, 64))
    return {
        "loss_and_grad_margins[mlsm]": lambda k: k.loss_and_grad_margins(kernels.MLSM, M, Y, float(c), 0.5),
        "loss_and_grad_margins[huber]": lambda k: k.loss_and_grad_margins(kernels.PSEUDO_HUBER, M, Y, float(c), 0.5),
        "loss_sum[mlsm]": lambda k: k.loss_sum(kernels.MLSM, M, Y, float(c), 0.5),
        "loss_derivs[mlsm]": lambda k: k.loss_derivs(kernels.MLSM, x, y, 4.0, 0.5),
        "normalized_adjacency": lambda k: k.normalized_adjacency(nodes, edges, 0.3),
        "row_diff_norm_sum": lambda k: k.row_diff_norm_sum(A, B),
    }


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-300)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    if "cython" not in mods:
        print("compiled extension not available; only the python backend can be timed")
    names = [n for n in ("cython", "python") if n in mods]
    print(f"{'kernel':32s}" + "".join(f"{n + ' [ms]':>14s}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        if len(names) == 2 and not agree(fn(mods["cython"]), fn(mods["python"])):
            raise SystemExit(f"backends disagree on {label}")
        times = [min(timeit.repeat(lambda: fn(mods[n]), number=1, repeat=args.repeat)) * 1e3 for n in names]
        row = f"{label:32s}" + "".join(f"{t:14.3f}" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
