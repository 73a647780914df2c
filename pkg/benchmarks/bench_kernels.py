"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times each hot kernel on the shapes the lemma sweep and the Gauss-Newton
polish use, then an end-to-end grad_norm loop with each backend, which runs
in a subprocess because the backend is chosen at import.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rabiflow import _kernels_py

try:
    from rabiflow import _ckernels
except ImportError:
    _ckernels = None

END_TO_END = """
import time
from rabiflow import BACKEND
from rabiflow.functionals import grad_norm
from rabiflow.geometry import Coupling, ProductSystem
from rabiflow.loopspace import FlowState, random_loop
sys_ = ProductSystem.uncut(Coupling.pairwise([1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]], -1.0))
states = [FlowState(random_loop(sys_, i, 3.0, 1.0, 64), 1.0, 0.5) for i in range(200)]
t0 = time.perf_counter()
for _ in range(5):
    for st in states:
        grad_norm(sys_, st)
print(BACKEND, (time.perf_counter() - t0) / 1000)
"""


def cases(rng):
    s = rng.uniform(0, 6, size=(2, 256))
    w = rng.standard_normal((2, 256)) + 1j * rng.standard_normal((2, 256))
    dw = rng.standard_normal((2, 256)) + 1j * rng.standard_normal((2, 256))
    coef, dP = rng.standard_normal((2, 256)), rng.uniform(size=(2, 256))
    pts = rng.standard_normal((256, 2))
    return {
        "radial_profile (2x256)": lambda k: k.radial_profile(s, 1.0),
        "loop_residual (2x256)": lambda k: k.loop_residual(w, dw, coef, dP, 0.7),
        "diameter (256 pts)": lambda k: k.hamiltonian_diameter(pts),
        "diameter (64 pts)": lambda k: k.hamiltonian_diameter(pts[:64]),
    }


def best(fn, repeat):
    timer = timeit.Timer(fn)
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; nothing to compare")
        return 1
    print(f"{'kernel':<26}{'python [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        tp = best(lambda: fn(_kernels_py), args.repeat) * 1e6
        tc = best(lambda: fn(_ckernels), args.repeat) * 1e6
        print(f"{name:<26}{tp:>14.2f}{tc:>14.2f}{tp / tc:>10.1f}")
    print()
    for pure in ("", "1"):
        env = dict(os.environ)
        env.pop("RABIFLOW_PURE_PYTHON", None)
        if pure:
            env["RABIFLOW_PURE_PYTHON"] = pure
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        backend, sec = out.stdout.split()
        print(f"grad_norm m=2 N=64, backend {backend:<7} {float(sec) * 1e6:8.1f} us/call")
    return 0


if __name__ == "__main__":
    sys.exit(main())
