"""Functionals of the mass-critical NLS ``i u_t + Delta u = -|u|^{4/d} u``.

Conserved quantities, the energy tensor, Virial and Morawetz functionals,
Littlewood-Paley projections, the sharp Gagliardo-Nirenberg defect, frequency
and space truncations, commutator errors and the space-time Strichartz norm.
All spatial integrals use the grid quadrature of :mod:`nlslab.spectral`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import make_interp_spline

from . import _accel
from . import spectral as sp
from .errors import InsufficientDataError, ValidationError
from .spectral import Field, Grid

__all__ = [
    "ConservedSet",
    "Cutoff",
    "TruncationParams",
    "EnergyTensor",
    "VirialReport",
    "mass",
    "energy",
    "energy_scale",
    "momentum",
    "conserved",
    "energy_tensor",
    "tensor_divergence_residual",
    "variance",
    "virial_check",
    "sharp_gn_defect",
    "sharp_gn_defect_printed",
    "bump",
    "lp_multiplier",
    "lp_project",
    "morawetz_action",
    "morawetz_terms",
    "truncate",
    "truncated_energy",
    "truncated_energy_ratio",
    "commutator_error",
    "strichartz_norm",
    "nonlinearity",
]


def _p(d: int) -> float:
    return 1.0 + 4.0 / d


# --------------------------------------------------------------------------
# conserved quantities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConservedSet:
    mass: float
    energy: float
    momentum: tuple[float, ...]


def mass(u: Field) -> float:
    return u.grid.weight * _accel.abs_pow_sum(u.values, 2.0)


def potential(u: Field) -> float:
    """``int |u|^{2 + 4/d}``."""
    return u.grid.weight * _accel.abs_pow_sum(u.values, 2.0 + 4.0 / u.grid.d)


def energy(u: Field) -> float:
    d = u.grid.d
    return 0.5 * sp.gradient_norm_sq(u) - potential(u) / (2.0 + 4.0 / d)


def energy_scale(u: Field) -> float:
    """Sum of the magnitudes of the kinetic and potential parts of the energy.

    Used to normalize energy drift, since ``E`` itself vanishes on the soliton.
    """
    d = u.grid.d
    return 0.5 * sp.gradient_norm_sq(u) + potential(u) / (2.0 + 4.0 / d)


def momentum(u: Field) -> tuple[float, ...]:
    """``Im int grad u * conj(u)``, one component per axis."""
    w = u.grid.weight
    return tuple(float(w * np.sum((g * np.conj(u.values)).imag)) for g in sp.gradient(u))


def conserved(u: Field) -> ConservedSet:
    return ConservedSet(mass(u), energy(u), momentum(u))


def nonlinearity(v: np.ndarray, d: int) -> np.ndarray:
    """``F(v) = -|v|^{4/d} v``."""
    a = v.real * v.real + v.imag * v.imag
    return -(a ** (2.0 / d)) * v


# --------------------------------------------------------------------------
# energy tensor and Virial
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyTensor:
    T00: np.ndarray
    T0j: tuple[np.ndarray, ...]
    Tjk: tuple[tuple[np.ndarray, ...], ...]


def energy_tensor(u: Field) -> EnergyTensor:
    """Mass density, momentum flux ``2 Im(u_j conj u)`` and stress tensor.

    ``T_jk = 4 Re(conj(u_j) u_k) - delta_jk (Delta |u|^2 + 2 (p-1)/(p+1) |u|^{p+1})``
    with ``p = 1 + 4/d``.
    """
    g = u.grid
    d = g.d
    p = _p(d)
    v = u.values
    grads = sp.gradient(u)
    dens = u.abs2
    lap_dens = sp.ifftn(-g.k2 * sp.fftn(dens)).real
    pot = 2.0 * (p - 1.0) / (p + 1.0) * dens ** (0.5 * (p + 1.0))
    T0j = tuple(2.0 * (gj * np.conj(v)).imag for gj in grads)
    Tjk = tuple(
        tuple(4.0 * (np.conj(grads[j]) * grads[k]).real - (lap_dens + pot if j == k else 0.0) for k in range(d))
        for j in range(d)
    )
    return EnergyTensor(dens.copy(), T0j, Tjk)


def _divergence(g: Grid, comps) -> np.ndarray:
    return sum(sp.ifftn(s * sp.fftn(c)).real for s, c in zip(g.derivative_symbols, comps))


def tensor_divergence_residual(u_prev: Field, u_mid: Field, u_next: Field, dt: float) -> float:
    """``|| d_t T00 + d_j T0j ||_2`` at the middle time, ``d_t`` by centered difference."""
    dtT00 = (u_next.abs2 - u_prev.abs2) / (2.0 * dt)
    div = _divergence(u_mid.grid, energy_tensor(u_mid).T0j)
    r = dtT00 + div
    return float(np.sqrt(u_mid.grid.weight * np.sum(r * r)))


def variance(u: Field) -> float:
    """``int |x - x_c|^2 |u|^2`` about the box center (the origin)."""
    return u.grid.weight * _accel.weighted_abs2_sum(u.values, u.grid.r2)


@dataclass(frozen=True)
class VirialReport:
    times: np.ndarray
    second_difference: np.ndarray
    expected: float
    max_relative_defect: float


def virial_check(traj, energy_value: float | None = None) -> VirialReport:
    """Compare the centered second difference of the variance with ``16 E``.

    ``traj`` needs ``variance`` and ``energy`` columns recorded on a uniform
    time grid.  ``energy_value`` overrides the recorded initial energy, e.g. to
    pass the free energy when checking linear evolution.  The relative defect
    is ``inf`` when ``E = 0`` (the soliton); compare ``second_difference``
    with zero directly in that case.
    """
    t = np.asarray(traj.times, dtype=float)
    if t.size < 3:
        raise InsufficientDataError("virial check needs at least 3 samples")
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-14):
        raise ValidationError("virial check requires a uniform time grid")
    V = traj.column("variance")
    dt = dts[0]
    dd = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / dt**2
    E = traj.column("energy")[0] if energy_value is None else energy_value
    expected = 16.0 * E
    with np.errstate(divide="ignore", invalid="ignore"):
        defect = np.max(np.abs(dd - expected)) / abs(expected)
    return VirialReport(t[1:-1], dd, expected, float(defect))


# --------------------------------------------------------------------------
# sharp Gagliardo-Nirenberg
# --------------------------------------------------------------------------


def sharp_gn_defect(u: Field, qmass: float) -> float:
    """``E(u) - 1/2 ||grad u||^2 (1 - (||u||_2 / ||Q||_2)^{4/d})``; >= 0 by sharp GN."""
    d = u.grid.d
    g2 = sp.gradient_norm_sq(u)
    ratio = np.sqrt(mass(u) / qmass)
    return energy(u) - 0.5 * g2 * (1.0 - ratio ** (4.0 / d))


def sharp_gn_defect_printed(u: Field, qmass: float) -> float:
    """Same defect with the bracket ``1 - (1 - ||u||^2/||Q||^2)^{4/d}`` as typeset in the source lemma.

    Kept only for side-by-side comparison; it is not a valid lower bound.
    """
    d = u.grid.d
    g2 = sp.gradient_norm_sq(u)
    base = 1.0 - mass(u) / qmass
    return energy(u) - 0.5 * g2 * (1.0 - np.sign(base) * abs(base) ** (4.0 / d))


# --------------------------------------------------------------------------
# smooth cutoffs and Littlewood-Paley projections
# --------------------------------------------------------------------------


def _step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
        b = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def bump(s, inner: float = 1.0, outer: float = 2.0):
    """Smooth radial bump: 1 for ``s <= inner``, 0 for ``s >= outer``, values in [0, 1]."""
    return 1.0 - _step((np.asarray(s, dtype=float) - inner) / (outer - inner))


def lp_multiplier(grid: Grid, N: float) -> np.ndarray:
    """Symbol ``psi(xi / N)`` of the low-frequency projection ``P_{<N}``."""
    if N <= 0:
        raise ValidationError(f"frequency cutoff must be positive, got {N}")
    return bump(np.sqrt(grid.k2) / N)


def lp_project(u: Field, N: float, side: Literal["low", "high"] = "low") -> Field:
    """Littlewood-Paley projection; ``P_{>N} = 1 - P_{<N}``."""
    sym = lp_multiplier(u.grid, N)
    if side == "low":
        return sp.apply_multiplier(u, sym)
    if side == "high":
        return sp.apply_multiplier(u, 1.0 - sym)
    raise ValidationError(f"side must be 'low' or 'high', got {side!r}")


@dataclass(frozen=True)
class TruncationParams:
    R: float
    K: float
    C: float = 8.0

    def __post_init__(self):
        if not (self.R > 0 and self.K > 0 and self.C >= 1):
            raise ValidationError(f"need R > 0, K > 0, C >= 1; got {self}")

    @property
    def frequency(self) -> float:
        return self.C * self.K


@lru_cache(maxsize=4)
def _virial_profile(rho_max: float = 4.0, n: int = 8001):
    # phi(rho) = rho psi(rho) = int_0^rho m, with m = 1 on [0,1] falling smoothly to 0 at 3
    rho = np.linspace(0.0, rho_max, n)
    m = bump(rho, 1.0, 3.0)
    phi = cumulative_trapezoid(m, rho, initial=0.0)
    phi[rho <= 1.0] = rho[rho <= 1.0]
    return rho, m, phi


@dataclass(frozen=True)
class Cutoff:
    """Spatial weights at radius ``R``.

    ``chi_bump``: 1 on ``|x| <= 0.9 R``, 0 on ``|x| >= R``.
    ``psi_virial``: vector field ``a(x) = psi(|x|/R) x`` with ``psi = 1`` on
    ``|x| <= R``, ``psi(rho) = 2/rho`` for ``rho >= 3``, and ``rho psi(rho)``
    nondecreasing so the Jacobian of ``a`` is positive semidefinite.  ``a`` is
    the gradient of a convex radial potential.
    """

    kind: Literal["chi_bump", "psi_virial"]
    R: float

    def __post_init__(self):
        if self.kind not in ("chi_bump", "psi_virial"):
            raise ValidationError(f"unknown cutoff kind {self.kind!r}")
        if not self.R > 0:
            raise ValidationError("cutoff radius must be positive")

    def values(self, grid: Grid) -> np.ndarray:
        rho = np.sqrt(grid.r2) / self.R
        if self.kind == "chi_bump":
            return bump(rho, 0.9, 1.0)
        return self._psi(rho)

    # radial ingredients of psi_virial -------------------------------------
    def _phi_m(self, rho):
        r, m, phi = _virial_profile()
        rho = np.asarray(rho, dtype=float)
        out_phi = np.where(rho >= r[-1], 2.0, np.interp(np.minimum(rho, r[-1]), r, phi))
        out_phi = np.where(rho <= 1.0, rho, out_phi)
        out_phi = np.where(rho >= 3.0, 2.0, out_phi)
        return out_phi, bump(rho, 1.0, 3.0)

    def _psi(self, rho):
        phi, _ = self._phi_m(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rho > 1.0, phi / np.where(rho > 0, rho, 1.0), 1.0)

    def vector_field(self, grid: Grid) -> tuple[np.ndarray, ...]:
        psi = self.values(grid) if self.kind == "psi_virial" else Cutoff("psi_virial", self.R).values(grid)
        return tuple(psi * c for c in grid.coords)

    def jacobian(self, grid: Grid) -> np.ndarray:
        """``d_k a_j`` as an array of shape ``(d, d) + grid.shape``."""
        d = grid.d
        r = np.sqrt(grid.r2)
        rho = r / self.R
        phi, m = self._phi_m(rho)
        psi = self._psi(rho)
        J = np.empty((d, d) + grid.shape)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = [np.where(r > 0, c / np.where(r > 0, r, 1.0), 0.0) for c in grid.coords]
        for j in range(d):
            for k in range(d):
                delta = 1.0 if j == k else 0.0
                J[j, k] = m * unit[j] * unit[k] + psi * (delta - unit[j] * unit[k])
        if d == 1:
            J[0, 0] = m
        return J

    def divergence(self, grid: Grid) -> np.ndarray:
        return np.trace(self.jacobian(grid))

    def laplacian_of_divergence(self, grid: Grid) -> np.ndarray:
        """``Delta (div a)`` from a spline of the radial divergence profile."""
        d = grid.d
        spline = _div_spline(d)
        rho = np.sqrt(grid.r2) / self.R
        inner = rho < 3.5
        out = np.zeros(grid.shape)
        rr = rho[inner]
        d2 = spline(rr, 2)
        if d == 2:
            with np.errstate(invalid="ignore", divide="ignore"):
                d1 = np.where(rr > 0, spline(rr, 1) / np.where(rr > 0, rr, 1.0), 0.0)
            lap = d2 + d1
        else:
            lap = d2
        out[inner] = lap
        if d == 2:
            # div a = 2/rho beyond rho = 3; its radial Laplacian is 2/rho^3
            out[~inner] = 2.0 / rho[~inner] ** 3
        return out / self.R**2

    def min_eigenvalue(self, grid: Grid) -> float:
        J = self.jacobian(grid)
        if grid.d == 1:
            return float(J[0, 0].min())
        a, b, c = J[0, 0], 0.5 * (J[0, 1] + J[1, 0]), J[1, 1]
        lam = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)
        return float(lam.min())


@lru_cache(maxsize=2)
def _div_spline(d: int):
    rho = np.linspace(0.0, 3.6, 7201)
    cut = Cutoff("psi_virial", 1.0)
    phi, m = cut._phi_m(rho)
    if d == 1:
        D = m
    else:
        D = m + np.where(rho > 1.0, phi / np.where(rho > 0, rho, 1.0), 1.0)
    return make_interp_spline(rho, D, k=5)


# --------------------------------------------------------------------------
# truncations, Morawetz action, commutator error
# --------------------------------------------------------------------------


def truncate(u: Field, trunc: TruncationParams) -> Field:
    """``chi(x/R) P_{<=CK} u``."""
    Iu = lp_project(u, trunc.frequency, "low")
    chi = Cutoff("chi_bump", trunc.R).values(u.grid)
    return Field(u.grid, chi * Iu.values)


def truncated_energy(u: Field, trunc: TruncationParams) -> float:
    return energy(truncate(u, trunc))


def truncated_energy_ratio(u: Field, trunc: TruncationParams) -> float:
    """``E(chi P u) / ||grad(chi P u)||_2^2``; small when the truncated field is nearly a rescaled Q."""
    v = truncate(u, trunc)
    g2 = sp.gradient_norm_sq(v)
    return energy(v) / g2 if g2 > 0 else 0.0


def morawetz_action(u: Field, cut: Cutoff, trunc: TruncationParams) -> float:
    """``int psi(x/R) x_j Im( (Iu)_j conj(Iu) )`` with ``I = P_{<=CK}``."""
    if cut.kind != "psi_virial":
        raise ValidationError("Morawetz action needs a psi_virial cutoff")
    v = lp_project(u, trunc.frequency, "low")
    a = cut.vector_field(u.grid)
    grads = sp.gradient(v)
    dens = sum(aj * (gj * np.conj(v.values)).imag for aj, gj in zip(a, grads))
    return float(u.grid.weight * np.sum(dens))


def commutator_field(u: Field, trunc: TruncationParams) -> np.ndarray:
    """``I F(u) - F(I u)`` as samples."""
    d = u.grid.d
    sym = lp_multiplier(u.grid, trunc.frequency)
    Fu = nonlinearity(u.values, d)
    IFu = sp.ifftn(sym * sp.fftn(Fu))
    Iu = sp.ifftn(sym * sp.fftn(u.values))
    return IFu - nonlinearity(Iu, d)


def commutator_error(u: Field, trunc: TruncationParams) -> float:
    e = commutator_field(u, trunc)
    return float(np.sqrt(u.grid.weight * np.sum(np.abs(e) ** 2)))


@dataclass(frozen=True)
class MorawetzTerms:
    """Pieces of the time derivative of the Morawetz action at one instant.

    ``rate = main_inside + E1 + E2 + E3`` where ``main_inside`` is four times
    the energy density integrated over ``|x| <= R``.
    """

    main_inside: float
    E1: float
    E2: float
    E3: float

    @property
    def rate(self) -> float:
        return self.main_inside + self.E1 + self.E2 + self.E3


def morawetz_terms(u: Field, cut: Cutoff, trunc: TruncationParams) -> MorawetzTerms:
    """Evaluate the Morawetz identity for ``v = P_{<=CK} u``.

    With ``a = psi(x/R) x`` and ``(i d_t + Delta) v = F(v) + e``:

    ``dM/dt = int 2 d_k a_j Re(conj v_j v_k) - 1/2 Delta(div a) |v|^2
    - (p-1)/(p+1) div a |v|^{p+1} + int div a Re(e conj v) + 2 a_j Re(e conj v_j)``.
    """
    g = u.grid
    d = g.d
    p = _p(d)
    v = lp_project(u, trunc.frequency, "low")
    vv = v.values
    grads = sp.gradient(v)
    J = cut.jacobian(g)
    diva = np.trace(J)
    a = cut.vector_field(g)
    dens = v.abs2
    w = g.weight
    inside = g.r2 <= cut.R**2

    quad = sum(2.0 * J[j, k] * (np.conj(grads[j]) * grads[k]).real for j in range(d) for k in range(d))
    pot = (p - 1.0) / (p + 1.0) * diva * dens ** (0.5 * (p + 1.0))
    bulk = quad - pot
    main_inside = w * np.sum(bulk[inside])
    E3 = w * np.sum(bulk[~inside])
    E2 = -0.5 * w * np.sum(cut.laplacian_of_divergence(g) * dens)
    e = commutator_field(u, trunc)
    E1 = w * np.sum(diva * (e * np.conj(vv)).real + 2.0 * sum(aj * (e * np.conj(gj)).real for aj, gj in zip(a, grads)))
    return MorawetzTerms(float(main_inside), float(E1), float(E2), float(E3))


# --------------------------------------------------------------------------
# Strichartz norm
# --------------------------------------------------------------------------


def strichartz_norm(traj) -> float:
    """``||u||_{L^q_{t,x}}`` with ``q = 2(d+2)/d``; trapezoid in time over the snapshots."""
    if len(traj.snapshots) < 2:
        raise InsufficientDataError("Strichartz norm needs at least 2 snapshots")
    t = np.array([s[0] for s in traj.snapshots])
    d = traj.snapshots[0][1].grid.d
    q = 2.0 * (d + 2) / d
    vals = np.array([f.grid.weight * _accel.abs_pow_sum(f.values, q) for _, f in traj.snapshots])
    total = float(trapezoid(vals, t))
    return total ** (1.0 / q)
