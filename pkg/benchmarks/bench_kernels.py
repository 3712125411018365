"""Compiled vs pure-Python graph kernels on grid graphs of the pendulum model.

Usage: ``python benchmarks/bench_kernels.py [--repeat 3]``
"""

import argparse
import time

import numpy as np

from ergohj import _pykernels
from ergohj.env import EnvPoint
from ergohj.hamiltonian import eikonal, pendulum_potential, separable_pendulum_potential
from ergohj.metricgraph import GraphFactory, GridWindow

try:
    from ergohj import _ckernels
except ImportError:
    _ckernels = None


def cases():
    yield ("1D cell h=1/1024, a=1.2", GraphFactory(
        GridWindow.cell(1 / 1024, 1, "axis"), eikonal(pendulum_potential(), 0.3),
        EnvPoint((0.0,))).graph(1.2))
    yield ("2D cell 48x48 16-nbr, a=2", GraphFactory(
        GridWindow.cell(1 / 48, 2, "16"), eikonal(separable_pendulum_potential(), (0.4, 0.1)),
        EnvPoint((0.0, 0.0))).graph(2.0))


def best_of(fn, repeat):
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        t.append(time.perf_counter() - t0)
    return min(t)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    mods = [("python", _pykernels)] + ([("compiled", _ckernels)] if _ckernels else [])
    print(f"{'graph':28s} {'kernel':12s} " + " ".join(f"{n:>10s}" for n, _ in mods) + "   speedup")
    for name, g in cases():
        n = g.n
        d0 = np.zeros(n)
        src = np.full(n, np.inf)
        src[0] = 0.0
        wpos = g.weight - g.weight.min()
        ptr, in_src, in_w, _ = g.in_csr
        kern = {
            "bellman_ford": lambda m: m.bellman_ford(g.indptr, g.dst, g.weight, d0),
            "dijkstra": lambda m: m.dijkstra(g.indptr, g.dst, wpos, src),
        }
        if n <= 1100:
            kern["karp_table"] = lambda m: m.karp_table(ptr, in_src, in_w)
        for kname, fn in kern.items():
            t = [best_of(lambda: fn(m), args.repeat) for _, m in mods]
            sp = f"{t[0] / t[1]:8.1f}x" if len(t) > 1 else "       -"
            print(f"{name:28s} {kname:12s} " + " ".join(f"{x:10.4f}" for x in t) + f"  {sp}")


if __name__ == "__main__":
    main()
