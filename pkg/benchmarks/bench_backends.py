"""Compare the compiled and pure-Python closed-loop kernels on the same scenario.

    python benchmarks/bench_backends.py [scenario.json] [--T 2.0] [--repeat 3]

Prints wall time per backend, RK4 steps per second, the speedup and the
largest state difference between the two trajectories.
"""

import argparse
import os
import time

import numpy as np

from tvsdac import kernel
from tvsdac.scenario import load_scenario
from tvsdac.sim import initial_state

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT = os.path.join(HERE, "..", "scenarios", "s1_representable.json")


def time_backend(sc, backend, repeat):
    system = sc.system
    y0 = initial_state(sc)
    nsteps = sc.nsteps
    ts = np.arange(2 * nsteps + 1) * (0.5 * sc.h)
    nu = np.moveaxis(system.nu(ts), -1, 0)
    r = np.zeros_like(ts)
    if system.config.reference_input is not None:
        r = system.config.reference_input.derivatives(ts, 1)[0]
    best = np.inf
    out = None
    for _ in range(repeat):
        kern = kernel.make_kernel(system, backend)
        t0 = time.perf_counter()
        out = kern.integrate(y0, nu, r, sc.h, nsteps, sc.decimation)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("scenario", nargs="?", default=DEFAULT)
    p.add_argument("--T", type=float, default=2.0, help="horizon (default 2)")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    sc = load_scenario(args.scenario).with_param("T", args.T)
    results = {}
    for backend in kernel.available_backends():
        secs, out = time_backend(sc, backend, args.repeat)
        results[backend] = (secs, out)
        print(f"{backend:>7}: {secs:9.4f} s  {sc.nsteps / secs:12.0f} steps/s  "
              f"(state dim {sc.system.dim}, {sc.nsteps} steps)")
    if len(results) == 2:
        (tc, oc), (tp, op) = results["cython"], results["python"]
        diff = float(np.max(np.abs(oc[1] - op[1])))
        print(f"speedup: {tp / tc:.1f}x   max state difference: {diff:.3g}")
    else:
        print("compiled kernel not built; only the Python fallback was timed")


if __name__ == "__main__":
    main()
