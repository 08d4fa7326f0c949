"""Compare the numba and pure-numpy kernels on the same workload.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``CNMC_BACKEND``.

    python3 benchmarks/bench_backends.py [--N 2] [--kmax 6] [--repeat 3]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from cnmc import ModelParams, QuadratureSpec, SymmetricField, nmc_graph
from cnmc.nmc_operator import linearized_nmc_basis
from cnmc import _accel
N, kmax, repeat = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
d = N - 1
P = ModelParams(N, 0.5)
spec = QuadratureSpec()
u = SymmetricField(d, kmax, {(0,) * d: 0.55, (0,) * (d - 1) + (1,): 0.05,
                             (0,) * (d - 1) + (2,): -0.01})
nmc_graph(u, P, spec)  # compile / warm caches
linearized_nmc_basis(u, P, spec)
t_h = min(timeit.repeat(lambda: nmc_graph(u, P, spec), number=1, repeat=repeat))
t_j = min(timeit.repeat(lambda: linearized_nmc_basis(u, P, spec), number=1, repeat=repeat))
h = nmc_graph(u, P, spec).values
print(json.dumps({"backend": _accel.BACKEND, "H_seconds": t_h, "DH_seconds": t_j,
                  "H": h.tolist()}))
"""


def run(backend, args):
    env = dict(os.environ, CNMC_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER, str(args.N), str(args.kmax),
                          str(args.repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--kmax", type=int, default=6)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    res = {b: run(b, args) for b in ("numba", "numpy")}
    diff = max(abs(a - b) for a, b in zip(res["numba"]["H"], res["numpy"]["H"]))
    print(f"N={args.N} kmax={args.kmax}")
    print(f"{'backend':8s} {'H [s]':>10s} {'DH basis [s]':>14s}")
    for b, r in res.items():
        print(f"{b:8s} {r['H_seconds']:10.4f} {r['DH_seconds']:14.4f}")
    print(f"speed-up H: {res['numpy']['H_seconds'] / res['numba']['H_seconds']:.1f}x, "
          f"DH: {res['numpy']['DH_seconds'] / res['numba']['DH_seconds']:.1f}x; "
          f"max |H_numba - H_numpy| = {diff:.2e}")


if __name__ == "__main__":
    main()
