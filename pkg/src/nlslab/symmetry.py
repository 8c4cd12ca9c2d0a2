"""Symmetry group G and the five symmetries of the mass-critical NLS as operators on fields.

Group action (``U(s) = e^{is Delta}``, Fourier symbol ``exp(-i s |xi|^2)``)::

    g f(x) = lam^{-d/2} e^{i x . xi0} (U(-t0 / lam^2) f)((x - x0) / lam)

i.e. ``g = M(xi0) T(x0) D(lam) U(-t0/lam^2)`` with modulation ``M``,
translation ``T`` and L^2 dilation ``D``.  Using

* ``D(lam) U(s) = U(lam^2 s) D(lam)``,
* ``T(a) U(s) = U(s) T(a)``,
* ``U(s) M(xi) = e^{-is|xi|^2} M(xi) T(2 s xi) U(s)``,
* ``D(lam) M(xi) = M(xi/lam) D(lam)``, ``D(lam) T(a) = T(lam a) D(lam)``,
* ``T(a) M(xi) = e^{-i a.xi} M(xi) T(a)``,

the product ``g2 g1`` equals ``c * g`` with

    lam = lam2 lam1,                t0 = lam2^2 t0_1 + t0_2,
    xi0 = xi0_2 + xi0_1 / lam2,      x0 = x0_2 + lam2 x0_1 - 2 (t0_2 / lam2) xi0_1,
    c = exp(i t0_2 |xi0_1|^2 / lam2^2 - i x0_2 . xi0_1 / lam2).

So the operators close only up to the unimodular constant ``c``;
:func:`compose` returns it alongside the parameters.

On the periodic box, translations are spectral phase shifts (periodic) and
dilations evaluate the trigonometric interpolant, treating the field as zero
outside the box.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _accel
from . import spectral as sp
from .errors import DomainError, ResolutionError, ResolutionWarning, ValidationError
from .spectral import Field, Grid

__all__ = [
    "GroupElement",
    "apply_group",
    "compose",
    "inverse",
    "translate_sym",
    "phase_sym",
    "scale_sym",
    "galilean",
    "pseudo_conformal",
    "minimal_mass_blowup",
    "spectral_tail",
    "edge_mass_fraction",
]

SPECTRAL_TAIL_MAX = 1e-6
EDGE_MASS_WARN = 1e-10


@dataclass(frozen=True)
class GroupElement:
    x0: tuple[float, ...] | float = 0.0
    xi0: tuple[float, ...] | float = 0.0
    lam: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValidationError(f"scale must be positive and finite, got {self.lam}")
        for v in (*np.atleast_1d(self.x0), *np.atleast_1d(self.xi0), self.t0):
            if not np.isfinite(v):
                raise ValidationError("group parameters must be finite")

    def vec(self, name: str, d: int) -> np.ndarray:
        v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
        if v.size == 1:
            v = np.repeat(v, d)
        if v.size != d:
            raise ValidationError(f"{name} has {v.size} components, grid dimension is {d}")
        return v


def compose(g2: GroupElement, g1: GroupElement, d: int = 1) -> tuple[GroupElement, complex]:
    """Parameters ``g`` and phase ``c`` with ``g2 (g1 f) = c * (g f)``."""
    x1, x2 = g1.vec("x0", d), g2.vec("x0", d)
    k1, k2 = g1.vec("xi0", d), g2.vec("xi0", d)
    lam = g2.lam * g1.lam
    t0 = g2.lam**2 * g1.t0 + g2.t0
    xi0 = k2 + k1 / g2.lam
    x0 = x2 + g2.lam * x1 - 2.0 * (g2.t0 / g2.lam) * k1
    c = np.exp(1j * (g2.t0 * np.dot(k1, k1) / g2.lam**2 - np.dot(x2, k1) / g2.lam))
    return GroupElement(tuple(x0), tuple(xi0), lam, t0), complex(c)


def inverse(g: GroupElement, d: int = 1) -> tuple[GroupElement, complex]:
    """``h`` and ``c`` with ``h (g f) = c * f``."""
    lam = 1.0 / g.lam
    xi = g.vec("xi0", d)
    x = g.vec("x0", d)
    t0 = -g.t0 / g.lam**2
    # solve compose(h, g) = identity for h's parameters
    xi_h = -xi * g.lam
    x_h = -(x / g.lam) + 2.0 * (t0 / lam) * xi
    h = GroupElement(tuple(x_h), tuple(xi_h), lam, t0)
    _, c = compose(h, g, d)
    return h, c


# --------------------------------------------------------------------------
# resolution bookkeeping
# --------------------------------------------------------------------------


def _band_mask(grid: Grid, frac: float) -> np.ndarray:
    k = np.abs(sp.sfft.fftfreq(grid.N) * grid.N)
    out = k >= frac * grid.N / 2.0
    if grid.d == 1:
        return out
    return out[:, None] | out[None, :]


def spectral_tail(values: np.ndarray, grid: Grid, frac: float = 2.0 / 3.0) -> float:
    """Fraction of spectral mass outside the central ``frac`` of the band."""
    F = sp.fftn(values)
    p = np.abs(F) ** 2
    tot = p.sum()
    return float(p[_band_mask(grid, frac)].sum() / tot) if tot > 0 else 0.0


def edge_mass_fraction(values: np.ndarray, grid: Grid, frac: float = 1.0 / 16.0) -> float:
    """Fraction of mass within ``frac * L`` of the box boundary."""
    a = np.abs(values) ** 2
    tot = a.sum()
    if tot == 0:
        return 0.0
    edge1 = np.abs(grid.x) >= (0.5 - frac) * grid.L
    edge = edge1 if grid.d == 1 else edge1[:, None] | edge1[None, :]
    return float(a[edge].sum() / tot)


def _check(values: np.ndarray, grid: Grid, what: str) -> None:
    tail = spectral_tail(values, grid)
    if tail > SPECTRAL_TAIL_MAX:
        raise ResolutionError(f"{what}: spectral tail mass fraction {tail:.2e} exceeds {SPECTRAL_TAIL_MAX:g}")
    edge = edge_mass_fraction(values, grid)
    if edge > EDGE_MASS_WARN:
        warnings.warn(f"{what}: mass fraction {edge:.2e} near the box edge", ResolutionWarning, stacklevel=3)


# --------------------------------------------------------------------------
# primitive operators
# --------------------------------------------------------------------------


def _propagate(values: np.ndarray, grid: Grid, s: float) -> np.ndarray:
    if s == 0.0:
        return values
    return sp.ifftn(np.exp(-1j * s * grid.k2) * sp.fftn(values))


def _translate(values: np.ndarray, grid: Grid, shift: np.ndarray) -> np.ndarray:
    if not np.any(shift):
        return values
    ph = sum(k * a for k, a in zip(grid.wavenumbers, shift))
    return sp.ifftn(np.exp(-1j * ph) * sp.fftn(values))


def _interp_coeffs_1d(F: np.ndarray, n: int) -> np.ndarray:
    """Reorder FFT coefficients to wavenumbers ``-n/2 .. n/2`` with the Nyquist mode split."""
    c = np.fft.fftshift(F, axes=0)
    out = np.empty((n + 1,) + F.shape[1:], dtype=np.complex128)
    out[:n] = c
    out[0] = 0.5 * c[0]
    out[n] = 0.5 * c[0]
    return out


def _eval_matrix(grid: Grid, pts: np.ndarray) -> np.ndarray:
    n = grid.N
    k = np.arange(-n // 2, n // 2 + 1)
    return np.exp(1j * np.outer(pts + 0.5 * grid.L, 2.0 * np.pi * k / grid.L)) / np.sqrt(n)


def _resample(values: np.ndarray, grid: Grid, scale: float, shift: np.ndarray) -> np.ndarray:
    """Samples of ``f((x - shift)/scale)`` from the trigonometric interpolant of ``f``.

    ``scale`` may be negative (reflection).  Preimages outside the box are set to 0.
    """
    n, L = grid.N, grid.L
    F = sp.fftn(values)
    half = 0.5 * L
    pre = [(grid.x - shift[j]) / scale for j in range(grid.d)]
    inside = [(p >= -half) & (p < half) for p in pre]
    if grid.d == 1:
        c = _interp_coeffs_1d(F, n) / np.sqrt(n)
        out = _accel.trig_eval(c, -n // 2, 2.0 * np.pi / L, pre[0] + half)
        return np.where(inside[0], out, 0.0)
    C = _interp_coeffs_1d(F, n)
    C = _interp_coeffs_1d(C.T, n).T
    E0 = _eval_matrix(grid, pre[0])
    E1 = _eval_matrix(grid, pre[1])
    out = E0 @ C @ E1.T
    return np.where(inside[0][:, None] & inside[1][None, :], out, 0.0)


def _dilate_translate(values: np.ndarray, grid: Grid, lam: float, x0: np.ndarray) -> np.ndarray:
    if lam == 1.0:
        return _translate(values, grid, x0)
    return abs(lam) ** (-0.5 * grid.d) * _resample(values, grid, lam, x0)


def _modulate(values: np.ndarray, grid: Grid, xi: np.ndarray, const: float = 0.0) -> np.ndarray:
    if not np.any(xi) and const == 0.0:
        return values
    ph = sum(c * k for c, k in zip(grid.coords, xi)) + const
    return values * np.exp(1j * ph)


# --------------------------------------------------------------------------
# public operators
# --------------------------------------------------------------------------


def apply_group(g: GroupElement, f: Field, check: bool = True) -> Field:
    """Apply ``g`` to ``f``: propagate, then rescale/translate, then modulate."""
    grid = f.grid
    d = grid.d
    if g == GroupElement():
        return f
    if check and g.lam < 1.0:
        _check_compressible(f.values, grid, g.lam)
    v = _propagate(f.values, grid, -g.t0 / g.lam**2)
    v = _dilate_translate(v, grid, g.lam, g.vec("x0", d))
    v = _modulate(v, grid, g.vec("xi0", d))
    if check:
        _check(v, grid, "apply_group")
    return Field(grid, v)


def _check_compressible(values: np.ndarray, grid: Grid, lam: float) -> None:
    # mode k of the input lands at k / lam after compression
    tail = spectral_tail(values, grid, frac=(2.0 / 3.0) * lam)
    if tail > SPECTRAL_TAIL_MAX:
        raise ResolutionError(f"compression by {lam:g} would alias: tail fraction {tail:.2e}")


def translate_sym(u: Field, x0) -> Field:
    """Space translation ``u(x - x0)`` (periodic, spectrally exact)."""
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (u.grid.d,))
    return Field(u.grid, _translate(u.values, u.grid, x0))


def phase_sym(u: Field, theta: float) -> Field:
    return Field(u.grid, u.values * np.exp(1j * theta))


def scale_sym(u: Field, lam: float, check: bool = True) -> Field:
    """``lam^{-d/2} u(x / lam)``; maps the snapshot at time ``t`` to the rescaled solution at ``lam^2 t``."""
    if not lam > 0:
        raise ValidationError("scale must be positive")
    if lam == 1.0:
        return u
    return apply_group(GroupElement(lam=lam), u, check=check)


def galilean(u: Field, t: float, xi) -> Field:
    """Galilean boost of the snapshot ``u(t)``: ``u(t, x - xi t) exp(i (xi/2).(x - (xi/2) t))``."""
    g = u.grid
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (g.d,))
    v = _translate(u.values, g, xi * t)
    v = _modulate(v, g, 0.5 * xi, const=-0.25 * float(np.dot(xi, xi)) * t)
    _check(v, g, "galilean")
    return Field(g, v)


def pseudo_conformal(u_at_t: Field, t: float) -> tuple[Field, float]:
    """Pseudo-conformal image of the snapshot ``u(t)``.

    Returns ``(v(1/t), 1/t)`` with ``v(s, x) = |s|^{-d/2} conj(u(1/s, x/s)) exp(i |x|^2 / 4s)``.
    The modulus ``|s|^{-d/2}`` is used for negative ``s``; the dropped factor is a
    constant phase.  The map is an involution.
    """
    if t == 0.0 or not np.isfinite(t):
        raise DomainError("pseudo-conformal transform needs a finite nonzero time")
    g = u_at_t.grid
    # v(1/t, x) = |t|^{d/2} conj(u(t, t x)) exp(i t |x|^2 / 4)
    if abs(t) > 1.0:
        _check_compressible(u_at_t.values, g, 1.0 / abs(t))
    w = abs(t) ** (0.5 * g.d) * _resample(np.conj(u_at_t.values), g, 1.0 / t, np.zeros(g.d))
    w = w * np.exp(0.25j * t * g.r2)
    _check(w, g, "pseudo_conformal")
    return Field(g, w), 1.0 / t


def minimal_mass_blowup(q, grid: Grid, t: float) -> Field:
    """Explicit blow-up solution ``S(t) = |t|^{-d/2} Q(x/t) exp(i |x|^2/(4t) - i/t)`` for ``t < 0``.

    ``q`` is a :class:`~nlslab.ground_state.GroundState`; ``S`` blows up at ``t = 0``
    with scale ``|t|``.
    """
    if t == 0.0:
        raise DomainError("S(t) is singular at t = 0")
    base = q.transformed(grid, scale=abs(t)).values
    return Field(grid, base * np.exp(1j * (grid.r2 / (4.0 * t) - 1.0 / t)))
