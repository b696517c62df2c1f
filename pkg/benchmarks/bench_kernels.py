"""Compare the compiled and pure-Python factor kernels on a simulated graph.

    python3 benchmarks/bench_kernels.py [--repeat N] [--rows R]

Times residual evaluation, Jacobian evaluation and one full batch
optimization with each backend, and checks that both produce the same numbers.
"""

import argparse
import copy
import time

import numpy as np

from multicue import kernels
from multicue.pipeline import PipelineConfig, build_graph
from multicue.sim import FieldConfig, NoiseConfig, simulate
from multicue.solver import lm_optimize


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=6)
    a = ap.parse_args()

    f = FieldConfig(rows=a.rows, seed=0)
    truth, slog, dem = simulate(f, NoiseConfig(gps_mode="PPP", seed=0))
    g = build_graph(slog, PipelineConfig(), dem, truth)
    facs = g.factors
    kinds = [int(x.kind) for x in facs]
    ii = [x.node_i for x in facs]
    jj = [-1 if x.node_j is None else x.node_j for x in facs]
    z = np.array([x.z for x in facs])
    print(f"graph: {len(g)} nodes, {len(facs)} factors")

    impls = {"python": kernels.python_impl(), "cython": kernels.compiled_impl()}
    if impls["cython"] is None:
        print("compiled kernels not built; run `python3 setup.py build_ext --inplace`")
        del impls["cython"]

    results, out = {}, {}
    for name, impl in impls.items():
        r = _best(lambda: kernels.residuals(g.states, kinds, ii, jj, z, impl=impl), a.repeat)
        j = _best(lambda: kernels.jacobians(g.states, kinds, ii, jj, z, impl=impl), a.repeat)
        h = copy.deepcopy(g)
        t0 = time.perf_counter()
        rep = lm_optimize(h, cfg=PipelineConfig().solver, impl=impl)
        solve = time.perf_counter() - t0
        results[name] = (r, j, solve, rep.iterations)
        out[name] = kernels.jacobians(g.states, kinds, ii, jj, z, impl=impl)

    print(f"{'backend':<8} {'residuals':>11} {'jacobians':>11} {'batch solve':>12} {'iters':>6}")
    for name, (r, j, s, it) in results.items():
        print(f"{name:<8} {r * 1e3:9.2f}ms {j * 1e3:9.2f}ms {s:11.3f}s {it:6d}")
    if len(results) == 2:
        rp, rc = results["python"], results["cython"]
        print(f"speedup  {rp[0] / rc[0]:10.1f}x {rp[1] / rc[1]:10.1f}x {rp[2] / rc[2]:11.1f}x")
        dE = np.abs(out["python"][0] - out["cython"][0]).max()
        dJ = max(np.abs(out["python"][k] - out["cython"][k]).max() for k in (1, 2))
        print(f"max |difference|: residuals {dE:.1e}, jacobians {dJ:.1e}")


if __name__ == "__main__":
    main()
