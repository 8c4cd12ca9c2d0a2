"""Hot pointwise kernels, compiled with numba when available.

Set ``NLSLAB_DISABLE_NUMBA=1`` to force the pure-numpy implementations; both
paths are kept numerically interchangeable and are cross-checked by the test
suite and by ``benchmarks/bench_kernels.py``.

Reductions are serial on purpose so that results do not depend on the thread
count.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("NLSLAB_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")

if USE_NUMBA and os.environ.get("NLSLAB_THREADS", "").strip().isdigit():
    # parallel kernels honour the same worker cap as the FFTs
    numba.set_num_threads(max(1, min(int(os.environ["NLSLAB_THREADS"]), numba.config.NUMBA_NUM_THREADS)))

# re-anchor the power recurrence in trig evaluation every this many terms
_ANCHOR = 64


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------


def _np_nonlinear_phase(u, dt, d):
    a = u.real * u.real + u.imag * u.imag
    if d == 1:
        a = a * a
    return u * np.exp(1j * dt * a)


def _np_abs_pow_sum(u, q):
    a = u.real * u.real + u.imag * u.imag
    return float(np.sum(a ** (0.5 * q)))


def _np_weighted_abs2_sum(u, w):
    a = u.real * u.real + u.imag * u.imag
    return float(np.sum(w * a))


def _np_phase_multiply(F, k2, s):
    return F * np.exp(-1j * s * k2)


def _np_trig_eval(coeffs, kmin, dxi, pts):
    n = coeffs.shape[0]
    freqs = dxi * (kmin + np.arange(n))
    out = np.empty(pts.shape[0], dtype=np.complex128)
    chunk = max(1, 2**22 // max(n, 1))
    for s in range(0, pts.shape[0], chunk):
        p = pts[s:s + chunk]
        out[s:s + chunk] = np.exp(1j * np.outer(p, freqs)) @ coeffs
    return out


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _nb_nonlinear_phase(u, dt, d):
        out = np.empty_like(u)
        for i in range(u.size):
            z = u[i]
            a = z.real * z.real + z.imag * z.imag
            if d == 1:
                a = a * a
            th = dt * a
            out[i] = z * complex(np.cos(th), np.sin(th))
        return out

    @numba.njit(cache=True)
    def _nb_phase_multiply(F, k2, s):
        out = np.empty_like(F)
        for i in range(F.size):
            th = -s * k2[i]
            out[i] = F[i] * complex(np.cos(th), np.sin(th))
        return out

    @numba.njit(cache=True)
    def _nb_abs_pow_sum(u, q):
        s = 0.0
        h = 0.5 * q
        n = int(h)
        if n == h and 0 <= n <= 8:
            # integer powers (the energy's |u|^{2+4/d}) avoid the libm pow call
            for i in range(u.size):
                z = u[i]
                a = z.real * z.real + z.imag * z.imag
                p = 1.0
                for _ in range(n):
                    p *= a
                s += p
            return s
        for i in range(u.size):
            z = u[i]
            a = z.real * z.real + z.imag * z.imag
            s += a**h
        return s

    @numba.njit(cache=True)
    def _nb_weighted_abs2_sum(u, w):
        s = 0.0
        for i in range(u.size):
            z = u[i]
            s += w[i] * (z.real * z.real + z.imag * z.imag)
        return s

    @numba.njit(cache=True, parallel=True)
    def _nb_trig_eval(coeffs, kmin, dxi, pts):
        n = coeffs.shape[0]
        m = pts.shape[0]
        out = np.empty(m, dtype=np.complex128)
        for j in numba.prange(m):
            p = pts[j]
            th = dxi * p
            step = complex(np.cos(th), np.sin(th))
            acc = 0.0 + 0.0j
            z = 0.0 + 0.0j
            for k in range(n):
                if k % _ANCHOR == 0:
                    ph = dxi * (kmin + k) * p
                    z = complex(np.cos(ph), np.sin(ph))
                else:
                    z = z * step
                acc += coeffs[k] * z
            out[j] = acc
        return out


def nonlinear_phase(u: np.ndarray, dt: float, d: int) -> np.ndarray:
    """Exact flow of ``i u_t = -|u|^{4/d} u`` over ``dt``: ``u * exp(i dt |u|^{4/d})``."""
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if USE_NUMBA:
        return _nb_nonlinear_phase(u.ravel(), float(dt), int(d)).reshape(u.shape)
    return _np_nonlinear_phase(u, float(dt), int(d))


def phase_multiply(F: np.ndarray, k2: np.ndarray, s: float) -> np.ndarray:
    """``F * exp(-i s k2)``: the free propagator over time ``s`` in Fourier space."""
    F = np.ascontiguousarray(F, dtype=np.complex128)
    if USE_NUMBA:
        k2 = np.ascontiguousarray(k2, dtype=np.float64)
        return _nb_phase_multiply(F.ravel(), k2.ravel(), float(s)).reshape(F.shape)
    return _np_phase_multiply(F, k2, float(s))


def abs_pow_sum(u: np.ndarray, q: float) -> float:
    """``sum |u|^q`` over all samples (no quadrature weight)."""
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if USE_NUMBA:
        return float(_nb_abs_pow_sum(u.ravel(), float(q)))
    return _np_abs_pow_sum(u, float(q))


def weighted_abs2_sum(u: np.ndarray, w: np.ndarray) -> float:
    """``sum w |u|^2`` over all samples (no quadrature weight)."""
    u = np.ascontiguousarray(u, dtype=np.complex128)
    w = np.ascontiguousarray(np.broadcast_to(w, u.shape), dtype=np.float64)
    if USE_NUMBA:
        return float(_nb_weighted_abs2_sum(u.ravel(), w.ravel()))
    return _np_weighted_abs2_sum(u, w)


def trig_eval(coeffs: np.ndarray, kmin: int, dxi: float, pts: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_k c_k exp(i dxi (kmin + k) p)`` at every point ``p``.

    ``coeffs`` must be ordered by increasing wavenumber starting at ``kmin``.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if USE_NUMBA:
        return _nb_trig_eval(coeffs, int(kmin), float(dxi), pts)
    return _np_trig_eval(coeffs, int(kmin), float(dxi), pts)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
