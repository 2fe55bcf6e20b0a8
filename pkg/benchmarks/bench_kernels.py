"""Compiled vs pure-Python stencil kernels.

Times ``laplacian``, ``hamiltonian`` and one Chebyshev step (``chebyshev_series``
with the default a*tau = 20 plan) on boxes of growing size, and checks that
both backends agree.

    python3 benchmarks/bench_kernels.py --repeat 20
"""

import argparse
import timeit

import numpy as np

from ballistic import _kernels_py
from ballistic.lattice import BoxGeometry
from ballistic.operators import Hamiltonian
from ballistic.potentials import PotentialSpec, realize
from ballistic.propagation import Propagator

try:
    from ballistic import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

CASES = [(1, 1024), (1, 8192), (1, 65536), (2, 64), (2, 256), (3, 24)]


def bench_case(d, L, repeat, rng):
    g = BoxGeometry(d, L)
    H = Hamiltonian(g, realize(PotentialSpec("power_law"), g))
    plan = Propagator(H).plan
    x = rng.normal(size=g.total_sites) + 1j * rng.normal(size=g.total_sites)
    v = np.ascontiguousarray(H.v)
    calls = {
        "laplacian": lambda m: m.laplacian(x, d, g.side),
        "hamiltonian": lambda m: m.hamiltonian(x, v, d, g.side),
        "chebyshev_step": lambda m: m.chebyshev_series(
            x, v, plan.bounds.center, plan.bounds.half_width, plan.coefficients, d, g.side
        ),
    }
    rows = []
    for name, call in calls.items():
        t_py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=repeat))
        if _ckernels is None:
            rows.append((d, L, g.total_sites, name, t_py, float("nan"), float("nan")))
            continue
        t_c = min(timeit.repeat(lambda: call(_ckernels), number=1, repeat=repeat))
        err = float(np.abs(call(_ckernels) - call(_kernels_py)).max())
        rows.append((d, L, g.total_sites, name, t_py, t_c, err))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"chebyshev order K = {Propagator(Hamiltonian(BoxGeometry(1, 8))).plan.order}")
    print(f"{'d':>2} {'L':>6} {'sites':>8} {'kernel':<15} {'python ms':>10} {'compiled ms':>12} {'speedup':>8} {'max diff':>9}")
    for d, L in CASES:
        for d_, L_, n, name, t_py, t_c, err in bench_case(d, L, args.repeat, rng):
            print(f"{d_:>2} {L_:>6} {n:>8} {name:<15} {1e3 * t_py:>10.3f} {1e3 * t_c:>12.3f} "
                  f"{t_py / t_c:>8.2f} {err:>9.1e}")


if __name__ == "__main__":
    main()
