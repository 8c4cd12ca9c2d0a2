"""Compare the numba kernels in nlslab._accel with their numpy fallbacks.

Run: python3 benchmarks/bench_kernels.py [--sizes 4096 65536 1048576] [--repeat 20]

Each kernel is timed on both paths for every size; outputs are checked for
agreement before timing.  A final row times whole split steps through the
public ``evolve`` with ``NLSLAB_DISABLE_NUMBA`` set and unset in subprocesses.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from nlslab import _accel

STEP_SNIPPET = """
import time
from nlslab.evolution import Schedule, SolverConfig, evolve
from nlslab.ground_state import reference_state
from nlslab.spectral import Grid
u = reference_state(1).transformed(Grid(1, 60.0, {n})) * 0.9
evolve(u, SolverConfig(t_end=1e-2, dt0=1e-3))  # warm-up / compile
t = time.perf_counter()
rec = evolve(u, SolverConfig(t_end=0.2, dt0=1e-3))
print((time.perf_counter() - t) / rec.steps)
"""


def best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def kernels(n, rng):
    u = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * 0.5
    k2 = rng.uniform(0, 100, n)
    w = rng.uniform(0, 1, n)
    m = min(n, 4096)
    coeffs = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    pts = rng.uniform(-10, 10, m)
    return {
        "nonlinear_phase": (lambda: _accel._np_nonlinear_phase(u, 1e-3, 1), lambda: _accel._nb_nonlinear_phase(u, 1e-3, 1)),
        "phase_multiply": (lambda: _accel._np_phase_multiply(u, k2, 1e-3), lambda: _accel._nb_phase_multiply(u, k2, 1e-3)),
        "abs_pow_sum": (lambda: _accel._np_abs_pow_sum(u, 6.0), lambda: _accel._nb_abs_pow_sum(u, 6.0)),
        "weighted_abs2_sum": (lambda: _accel._np_weighted_abs2_sum(u, w), lambda: _accel._nb_weighted_abs2_sum(u, w)),
        f"trig_eval[{m}x256]": (
            lambda: _accel._np_trig_eval(coeffs, -128, 0.1, pts),
            lambda: _accel._nb_trig_eval(coeffs, -128, 0.1, pts),
        ),
    }


def step_time(n, disable):
    env = dict(os.environ)
    if disable:
        env["NLSLAB_DISABLE_NUMBA"] = "1"
    else:
        env.pop("NLSLAB_DISABLE_NUMBA", None)
    out = subprocess.run(
        [sys.executable, "-c", STEP_SNIPPET.format(n=n)], env=env, capture_output=True, text=True, check=True
    )
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4096, 65536, 1048576])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-steps", action="store_true", help="skip the end-to-end split-step timing")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'n':>10}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for n in args.sizes:
        for name, (f_np, f_nb) in kernels(n, rng).items():
            a, b = np.asarray(f_np()), np.asarray(f_nb())
            if not np.allclose(a, b, rtol=1e-12, atol=1e-12 * max(1.0, float(np.max(np.abs(a))))):
                sys.exit(f"{name}: numba and numpy disagree")
            t_np = best_of(f_np, args.repeat)
            t_nb = best_of(f_nb, args.repeat)
            print(f"{name:<24}{n:>10}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.2f}")

    if not args.no_steps:
        for n in (1024, 16384, 131072):
            t_np = step_time(n, True)
            t_nb = step_time(n, False)
            print(f"{'split step (evolve)':<24}{n:>10}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.2f}")


if __name__ == "__main__":
    main()
