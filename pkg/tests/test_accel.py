"""Compiled kernels must agree with the numpy reference path."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlslab import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _cplx(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


@needs_numba
@given(st.integers(0, 2**31 - 1), st.integers(1, 300), st.floats(-1.0, 1.0), st.sampled_from([1, 2]))
def test_pointwise_kernels_agree(seed, n, dt, d):
    rng = np.random.default_rng(seed)
    u = _cplx(rng, n)
    k2 = rng.random(n) * 100
    assert np.allclose(_accel._nb_nonlinear_phase(u, dt, d), _accel._np_nonlinear_phase(u, dt, d), rtol=1e-13, atol=1e-14)
    assert np.allclose(_accel._nb_phase_multiply(u, k2, dt), _accel._np_phase_multiply(u, k2, dt), rtol=1e-13, atol=1e-14)


@needs_numba
@given(st.integers(0, 2**31 - 1), st.integers(1, 2000), st.floats(1.0, 6.0) | st.sampled_from([2.0, 4.0, 6.0, 8.0]))
def test_reductions_agree(seed, n, q):
    rng = np.random.default_rng(seed)
    u = _cplx(rng, n)
    w = rng.random(n)
    a, b = _accel._nb_abs_pow_sum(u, q), _accel._np_abs_pow_sum(u, q)
    assert a == pytest.approx(b, rel=1e-12)
    a, b = _accel._nb_weighted_abs2_sum(u, w), _accel._np_weighted_abs2_sum(u, w)
    assert a == pytest.approx(b, rel=1e-12)


@needs_numba
@pytest.mark.parametrize("n", [8, 63, 64, 65, 257])
def test_trig_eval_agrees(n):
    rng = np.random.default_rng(n)
    c = _cplx(rng, n + 1) / n
    pts = rng.uniform(0, 10, 50)
    a = _accel._nb_trig_eval(c, -n // 2, 2 * np.pi / 10, pts)
    b = _accel._np_trig_eval(c, -n // 2, 2 * np.pi / 10, pts)
    assert np.max(np.abs(a - b)) < 1e-12


def test_nonlinear_phase_preserves_modulus():
    rng = np.random.default_rng(1)
    u = _cplx(rng, (16, 16))
    v = _accel.nonlinear_phase(u, 0.37, 2)
    assert np.allclose(np.abs(v), np.abs(u), rtol=1e-15)
    assert v.shape == u.shape


_SCRIPT = """
import json, numpy as np
from nlslab import _accel
from nlslab.evolution import SolverConfig, evolve
from nlslab.ground_state import reference_state
from nlslab.spectral import Grid
q = reference_state(1)
u0 = q.transformed(Grid(1, 40.0, 512)) * 1.02
rec = evolve(u0, SolverConfig(t_end=0.2, dt0=1e-3))
print(json.dumps({"backend": _accel.backend(), "mass": rec.rows[-1]["mass"], "g2": rec.rows[-1]["grad_norm_sq"]}))
"""


def _run(env_flag):
    env = dict(os.environ)
    env.pop("NLSLAB_DISABLE_NUMBA", None)
    if env_flag:
        env["NLSLAB_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _SCRIPT], capture_output=True, text=True, env=env, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


@needs_numba
def test_env_flag_selects_backend_and_results_match():
    a = _run(False)
    b = _run(True)
    assert a["backend"] == "numba" and b["backend"] == "numpy"
    assert a["mass"] == pytest.approx(b["mass"], rel=1e-12)
    assert a["g2"] == pytest.approx(b["g2"], rel=1e-10)
