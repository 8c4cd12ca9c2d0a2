"""Matching fields against the ground state: bubble fits, weak-limit witnesses,
mass concentration and greedy multi-bubble extraction.

All fits are carried out in the frame of ``u``: the bubble
``a e^{i gamma} lam^{-d/2} Q((x - x0)/lam)`` is sampled on the grid of ``u``
and compared there.  By the change of variables ``x -> lam x + x0`` this is the
same L^2 distance as ``|| lam^{d/2} u(lam x + x0) e^{-i gamma} - a Q ||`` in the
profile frame, without resampling ``u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import spectral as sp
from .errors import (
    InsufficientDataError,
    NotApplicableError,
    ResolutionError,
    ValidationError,
)
from .ground_state import GroundState, reference_state
from .spectral import Field, Grid
from .symmetry import SPECTRAL_TAIL_MAX, GroupElement, apply_group, spectral_tail
from .trajectory import TrajectoryRecord

log = logging.getLogger(__name__)

__all__ = [
    "BubbleFit",
    "ScaleSeries",
    "fit_bubble",
    "WeakLimitReport",
    "DICTIONARY",
    "weak_limit_witness",
    "mass_in_ball",
    "ConcentrationTable",
    "concentration_scan",
    "synthesize_bubbles",
    "extract_bubbles",
    "final_decade_mask",
]

MAX_ITER = 200
PARAM_TOL = 1e-10


# --------------------------------------------------------------------------
# bubble fits
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BubbleFit:
    """Best match ``u ~ amplitude e^{i gamma} lam^{-d/2} Q((x - x0)/lam)``.

    ``residual`` is ``u`` minus the fitted bubble on the grid of ``u``, so
    ``distance == ||residual||_2``.  :meth:`profile_residual` gives the same
    error in the profile frame.
    """

    lam: float
    gamma: float
    x0: tuple[float, ...]
    distance: float
    residual: Field
    amplitude: float = 1.0
    bubble_mass: float = 0.0
    converged: bool = True
    iterations: int = 0

    def group_element(self) -> GroupElement:
        """Group element taking ``Q`` to the fitted bubble (up to amplitude and phase)."""
        return GroupElement(x0=self.x0, lam=self.lam)

    def profile_residual(self) -> Field:
        """``lam^{d/2} r(lam x + x0) e^{-i gamma}`` for the stored residual ``r``."""
        g = GroupElement(x0=tuple(-np.asarray(self.x0) / self.lam), lam=1.0 / self.lam)
        return apply_group(g, self.residual, check=False) * np.exp(-1j * self.gamma)


class _Objective:
    """``D = || v - a e^{i gamma} Q_{lam,x0} ||^2`` and its coordinate derivatives."""

    def __init__(self, u: Field, qref: GroundState):
        self.grid = u.grid
        self.v = u.values
        self.w = u.grid.weight
        self.q = qref
        self.d = u.grid.d
        self.vv = self.w * float(np.sum(np.abs(self.v) ** 2))

    def _rho(self, lam, x0):
        diff = [xc - x0[j] for j, xc in enumerate(self.grid.coords)]
        dist = np.sqrt(sum(a * a for a in diff))
        return diff, dist, dist / lam

    def bubble(self, lam, x0) -> np.ndarray:
        _, _, rho = self._rho(lam, x0)
        return lam ** (-0.5 * self.d) * self.q.profile(rho)

    def overlap(self, lam, x0) -> tuple[complex, float]:
        b = self.bubble(lam, x0)
        return complex(self.w * np.sum(self.v * b)), self.w * float(np.sum(b * b))

    def value(self, a, gamma, lam, x0) -> float:
        c, n = self.overlap(lam, x0)
        return self.vv - 2.0 * a * float(np.real(np.exp(-1j * gamma) * c)) + a * a * n

    def _dvalue(self, a, gamma, b, db) -> float:
        c = complex(self.w * np.sum(self.v * db))
        return -2.0 * a * float(np.real(np.exp(-1j * gamma) * c)) + 2.0 * a * a * self.w * float(np.sum(b * db))

    def d_loglam(self, a, gamma, lam, x0) -> float:
        _, _, rho = self._rho(lam, x0)
        s = lam ** (-0.5 * self.d)
        q0 = self.q.profile(rho)
        q1 = self.q.profile(rho, nu=1)
        b = s * q0
        db = s * (-0.5 * self.d * q0 - rho * q1)
        return self._dvalue(a, gamma, b, db)

    def d_center(self, j, a, gamma, lam, x0) -> float:
        diff, dist, rho = self._rho(lam, x0)
        s = lam ** (-0.5 * self.d)
        b = s * self.q.profile(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist > 0, diff[j] / dist, 0.0)
        db = -s * self.q.profile(rho, nu=1) * unit / lam
        return self._dvalue(a, gamma, b, db)


def _line_search(deriv: Callable[[float], float], x: float, step: float) -> float:
    """Zero of the directional derivative nearest ``x`` on the descent side (Brent)."""
    f0 = deriv(x)
    if f0 == 0.0:
        return x
    direction = -np.sign(f0)
    lo, flo = x, f0
    h = step
    for _ in range(60):
        hi = x + direction * h
        fhi = deriv(hi)
        if np.sign(fhi) != np.sign(flo):
            a, b = sorted((lo, hi))
            return brentq(deriv, a, b, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=200)
        lo, flo = hi, fhi
        h *= 2.0
    return lo


def _centroid(u: Field) -> np.ndarray:
    a = u.abs2
    tot = float(np.sum(a))
    if tot == 0.0:
        return np.zeros(u.grid.d)
    return np.array([float(np.sum(xc * a)) / tot for xc in u.grid.coords])


def _argmax_center(u: Field) -> np.ndarray:
    idx = np.unravel_index(int(np.argmax(u.abs2)), u.grid.shape)
    return np.array([float(xc[idx]) for xc in u.grid.coords])


def _wrap(angle: float) -> float:
    return float((angle + np.pi) % (2.0 * np.pi) - np.pi)


def fit_bubble(
    u: Field,
    qref: GroundState,
    radial: bool = False,
    free_amplitude: bool = False,
    x0_init: str | Sequence[float] = "centroid",
    lam_init: float | None = None,
    max_iter: int = MAX_ITER,
) -> BubbleFit:
    """Scale, phase and center that best match ``u`` against the ground state.

    Coordinate descent: the phase (and amplitude, if free) are updated in
    closed form, ``log lam`` and each center component by a Brent root search
    on the exact derivative of the squared distance.  ``lam`` starts at
    ``||grad Q|| / ||grad u||``, the center at the ``|u|^2`` centroid (pinned
    to 0 when ``radial``), the phase at the argument of the overlap.

    Parameters
    ----------
    u : Field
        Field to fit; must be nonzero.
    qref : GroundState
        Ground state of the same dimension.
    radial : bool
        Pin the center to the origin.
    free_amplitude : bool
        Also fit a real amplitude ``a`` (used by :func:`extract_bubbles`);
        otherwise ``a = 1``.
    x0_init : {"centroid", "argmax"} or sequence
        Initial center.
    max_iter : int
        Sweeps before giving up; the best iterate is returned with
        ``converged=False``.
    """
    d = u.grid.d
    if qref.d != d:
        raise ValidationError("ground state dimension does not match the field")
    g2 = sp.gradient_norm_sq(u)
    if not np.any(u.values) or g2 == 0.0:
        raise ValidationError("cannot fit a bubble to a zero or constant field")
    obj = _Objective(u, qref)
    lam = float(lam_init) if lam_init else qref.gradient_norm / np.sqrt(g2)
    if radial:
        x0 = np.zeros(d)
    elif isinstance(x0_init, str):
        x0 = _centroid(u) if x0_init == "centroid" else _argmax_center(u)
    else:
        x0 = np.asarray(x0_init, dtype=float).reshape(d)

    def closed_form(lam, x0):
        c, n = obj.overlap(lam, x0)
        gamma = float(np.angle(c))
        a = abs(c) / n if free_amplitude else 1.0
        return a, gamma

    a, gamma = closed_form(lam, x0)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        old = np.array([lam, gamma, a, *x0])
        s = _line_search(lambda s: obj.d_loglam(a, gamma, np.exp(s), x0), np.log(lam), 0.05)
        lam = float(np.exp(s))
        a, gamma = closed_form(lam, x0)
        if not radial:
            for j in range(d):

                def dj(z, j=j):
                    xx = x0.copy()
                    xx[j] = z
                    return obj.d_center(j, a, gamma, lam, xx)

                x0[j] = _line_search(dj, x0[j], 0.05 * lam)
                a, gamma = closed_form(lam, x0)
        new = np.array([lam, gamma, a, *x0])
        delta = np.abs(new - old)
        delta[1] = abs(_wrap(gamma - old[1]))
        if np.max(delta) < PARAM_TOL:
            converged = True
            break
    if not converged:
        log.warning("fit_bubble: no convergence after %d sweeps", max_iter)
    b = a * np.exp(1j * gamma) * obj.bubble(lam, x0)
    res = Field(u.grid, u.values - b)
    return BubbleFit(
        lam=lam,
        gamma=_wrap(gamma),
        x0=tuple(float(v) for v in x0),
        distance=sp.lp_norm(res, 2),
        residual=res,
        amplitude=float(a),
        bubble_mass=float(u.grid.weight * np.sum(np.abs(b) ** 2)),
        converged=converged,
        iterations=it,
    )


# --------------------------------------------------------------------------
# scale series
# --------------------------------------------------------------------------


def final_decade_mask(lam: np.ndarray) -> np.ndarray:
    """Rows after the last time ``lam`` exceeded ten times its final minimum."""
    lam = np.asarray(lam, dtype=float)
    lmin = float(np.min(lam))
    above = np.nonzero(lam > 10.0 * lmin)[0]
    start = int(above[-1]) + 1 if above.size else 0
    mask = np.zeros(lam.size, dtype=bool)
    mask[start:] = True
    return mask


@dataclass
class ScaleSeries:
    """Focusing scale ``lam(t) = ||grad Q|| / ||grad u(t)||`` with optional fit data."""

    t: np.ndarray
    lam: np.ndarray
    distance: np.ndarray | None = None
    window_mass: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        if self.t.shape != self.lam.shape or self.t.ndim != 1:
            raise ValidationError("t and lam must be 1-D arrays of equal length")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise ValidationError("times must be strictly increasing")
        if not np.all(self.lam > 0):
            raise ValidationError("focusing scale must be positive")

    def __len__(self) -> int:
        return self.t.size

    @classmethod
    def from_trajectory(cls, traj: TrajectoryRecord, column: str = "lambda") -> "ScaleSeries":
        return cls(traj.times, traj.column(column))

    def final_decade(self) -> "ScaleSeries":
        m = final_decade_mask(self.lam)
        pick = (lambda a: None if a is None else np.asarray(a)[m])
        return ScaleSeries(self.t[m], self.lam[m], pick(self.distance), pick(self.window_mass))

    @property
    def shrink_factor(self) -> float:
        return float(np.max(self.lam) / self.lam[-1])

    def monotone_decreasing(self, final_decade: bool = True) -> bool:
        lam = self.final_decade().lam if final_decade else self.lam
        return bool(np.all(np.diff(lam) < 0))


# --------------------------------------------------------------------------
# weak-limit surrogate
# --------------------------------------------------------------------------


def _gauss(width):
    return lambda x, r2, q: np.exp(-r2 / (2.0 * width**2))


# frozen test-function dictionary; each entry maps (coords, |x|^2, GroundState) -> samples
DICTIONARY: tuple[tuple[str, Callable], ...] = (
    ("gauss_0.5", _gauss(0.5)),
    ("gauss_1", _gauss(1.0)),
    ("gauss_2", _gauss(2.0)),
    ("ground_state", lambda x, r2, q: q.profile(np.sqrt(r2))),
    ("hermite_odd", lambda x, r2, q: x[0] * np.exp(-0.5 * r2)),
    ("hermite_even", lambda x, r2, q: (2.0 * r2 - len(x)) * np.exp(-0.5 * r2)),
    ("gauss_shifted", lambda x, r2, q: np.exp(-0.5 * ((x[0] - 0.75) ** 2 + (r2 - x[0] ** 2)))),
    ("gauss_modulated", lambda x, r2, q: np.exp(2j * x[0] - 0.5 * r2)),
    ("sech", lambda x, r2, q: 2.0 * np.exp(-np.sqrt(r2)) / (1.0 + np.exp(-2.0 * np.sqrt(r2)))),
)


def _eval_test(fn, grid: Grid, qref: GroundState, lam: float = 1.0, x0=None) -> np.ndarray:
    d = grid.d
    c = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    x = [(xc - c[j]) / lam for j, xc in enumerate(grid.coords)]
    r2 = sum(a * a for a in x)
    return lam ** (-0.5 * d) * np.asarray(fn(x, r2, qref), dtype=complex)


@dataclass
class WeakLimitReport:
    names: list[str]
    pairings: np.ndarray  # (n_seq, n_dict) complex
    reference: np.ndarray  # (n_dict,) complex, <Q, phi>
    deviations: np.ndarray  # (n_seq, n_dict) real

    @property
    def max_deviation(self) -> np.ndarray:
        return self.deviations.max(axis=1)

    @property
    def terminal_max_deviation(self) -> float:
        return float(self.deviations[-1].max())

    def decreasing_over_last(self, k: int = 5) -> bool:
        m = self.max_deviation[-k:]
        return bool(np.all(np.diff(m) < 0))


def weak_limit_witness(
    u_seq: Sequence[Field],
    fits: Sequence[BubbleFit] | None = None,
    qref: GroundState | None = None,
    dictionary: Sequence[tuple[str, Callable]] = DICTIONARY,
) -> WeakLimitReport:
    """Pairings ``<lam^{d/2} u(lam x + x0) e^{-i gamma}, phi>`` against a fixed dictionary.

    The pairing is evaluated as ``e^{-i gamma} <u, phi_{lam,x0}>`` with the
    test function moved to the frame of ``u``.  Test functions are normalized
    to unit L^2.  Missing fits are computed with :func:`fit_bubble`.
    """
    if len(dictionary) == 0:
        raise ValidationError("test-function dictionary is empty")
    if len(u_seq) == 0:
        raise InsufficientDataError("empty field sequence")
    d = u_seq[0].grid.d
    qref = qref or reference_state(d)
    if fits is None:
        fits = [fit_bubble(u, qref) for u in u_seq]
    if len(fits) != len(u_seq):
        raise ValidationError("need one fit per field")
    names = [n for n, _ in dictionary]
    qg = qref.grid
    norms, ref = [], []
    for _, fn in dictionary:
        phi = _eval_test(fn, qg, qref)
        nrm = sp.lp_norm(Field(qg, phi), 2)
        norms.append(nrm)
        ref.append(sp.inner_product(qref.field, Field(qg, phi / nrm)))
    pair = np.empty((len(u_seq), len(dictionary)), dtype=complex)
    for i, (u, f) in enumerate(zip(u_seq, fits)):
        for k, (_, fn) in enumerate(dictionary):
            phi = _eval_test(fn, u.grid, qref, f.lam, f.x0) / norms[k]
            pair[i, k] = np.exp(-1j * f.gamma) * sp.inner_product(u, Field(u.grid, phi))
    ref = np.array(ref)
    return WeakLimitReport(names, pair, ref, np.abs(pair - ref[None, :]))


# --------------------------------------------------------------------------
# concentration
# --------------------------------------------------------------------------


def mass_in_ball(u: Field, center, radius: float) -> float:
    """``int_{|x - center| <= radius} |u|^2`` by grid quadrature (box distance, no wrap)."""
    if not radius > 0:
        raise ValidationError("radius must be positive")
    c = np.broadcast_to(np.asarray(center, dtype=float), (u.grid.d,))
    r2 = sum((xc - c[j]) ** 2 for j, xc in enumerate(u.grid.coords))
    return u.grid.weight * float(np.sum(u.abs2[r2 <= radius * radius]))


@dataclass
class ConcentrationTable:
    t: np.ndarray
    center: np.ndarray  # (n, d)
    radius: np.ndarray
    mass: np.ndarray
    lam: np.ndarray
    final_decade: np.ndarray
    qmass: float
    tol: float

    @property
    def flag(self) -> bool:
        m = self.mass[self.final_decade]
        return bool(np.all(m >= (1.0 - self.tol) * self.qmass))

    def to_csv_text(self) -> str:
        d = self.center.shape[1]
        cols = ["t"] + [f"center_{'xy'[j]}" for j in range(d)] + ["radius", "mass", "lambda", "final_decade"]
        lines = [",".join(cols)]
        for i in range(self.t.size):
            vals = [self.t[i], *self.center[i], self.radius[i], self.mass[i], self.lam[i], int(self.final_decade[i])]
            lines.append(",".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"


def concentration_scan(
    traj: TrajectoryRecord,
    T_est: float,
    exponent: float = 2.0 / 3.0,
    eps: float = 0.05,
    tol: float = 0.01,
    qmass: float | None = None,
    center=None,
) -> ConcentrationTable:
    """Mass inside the window ``|x - x(t)| <= (T - t)^{exponent - eps}`` at every snapshot.

    The center is the ``|u|^2`` argmax cell unless given.  The final decade is
    the set of snapshots after which ``lambda`` (from the snapshot gradient)
    stays within a factor 10 of its last value; the flag is true when every
    window there holds at least ``(1 - tol) ||Q||^2``.
    """
    traj.require_snapshots(2)
    times = traj.snapshot_times
    if np.any(times >= T_est):
        raise ValidationError("all snapshots must precede the blow-up time estimate")
    fields = traj.snapshot_fields
    d = traj.d
    qgrad = reference_state(d).gradient_norm
    lam = np.array([qgrad / np.sqrt(sp.gradient_norm_sq(f)) for f in fields])
    if traj.termination != "blowup_detected" and lam[-1] > 0.5 * np.max(lam):
        raise NotApplicableError("trajectory does not focus; concentration scan needs a blow-up run")
    qmass = reference_state(d).mass if qmass is None else qmass
    radius = (T_est - times) ** (exponent - eps)
    centers, masses = [], []
    for f, r in zip(fields, radius):
        c = _argmax_center(f) if center is None else np.broadcast_to(np.asarray(center, float), (d,))
        centers.append(c)
        masses.append(mass_in_ball(f, c, r))
    return ConcentrationTable(
        t=times,
        center=np.array(centers),
        radius=radius,
        mass=np.array(masses),
        lam=lam,
        final_decade=final_decade_mask(lam),
        qmass=qmass,
        tol=tol,
    )


# --------------------------------------------------------------------------
# multi-bubble synthesis and extraction
# --------------------------------------------------------------------------


def _separation(g1: GroupElement, g2: GroupElement, d: int) -> float:
    l1, l2 = g1.lam, g2.lam
    dx = g1.vec("x0", d) - g2.vec("x0", d)
    dk = g1.vec("xi0", d) - g2.vec("xi0", d)
    return (
        l1 / l2
        + l2 / l1
        + float(dx @ dx) / (l1 * l2)
        + l1 * l2 * float(dk @ dk)
        + abs(g1.t0 - g2.t0) / (l1 * l2)
    )


def _noise_field(grid: Grid, mass: float, rng: np.random.Generator) -> np.ndarray:
    shape = grid.shape
    spec = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k = np.abs(np.fft.fftfreq(grid.N) * grid.N)
    band = k <= grid.N / 4.0
    if grid.d == 2:
        band = band[:, None] & band[None, :]
    v = sp.ifftn(spec * band)
    return v * np.sqrt(mass / (grid.weight * float(np.sum(np.abs(v) ** 2))))


def synthesize_bubbles(
    specs: Sequence[tuple[float, GroupElement]],
    qref: GroundState,
    noise: float = 0.0,
    grid: Grid | None = None,
    seed: int = 0,
    min_separation: float = 100.0,
) -> Field:
    """Sum of rescaled ground states ``sqrt(m / ||Q||^2) g Q`` plus optional noise of mass ``noise``.

    Parameter pairs must be separated: ``lam1/lam2 + lam2/lam1 + |dx|^2/(lam1 lam2)
    + lam1 lam2 |dxi|^2 + |dt|/(lam1 lam2) >= min_separation``.
    """
    grid = grid or qref.grid
    d = grid.d
    if not specs:
        raise ValidationError("need at least one bubble")
    for i in range(len(specs)):
        for j in range(i):
            s = _separation(specs[i][1], specs[j][1], d)
            if s < min_separation:
                raise ValidationError(f"bubbles {j} and {i} are not separated (parameter distance {s:.3g})")
    total = np.zeros(grid.shape, dtype=complex)
    for m, g in specs:
        if m <= 0:
            raise ValidationError("bubble masses must be positive")
        amp = np.sqrt(m / qref.mass)
        if g.t0 == 0.0:
            b = qref.transformed(grid, scale=g.lam, center=g.vec("x0", d)).values
            b = b * np.exp(1j * sum(c * k for c, k in zip(grid.coords, g.vec("xi0", d))))
        else:
            b = apply_group(g, qref.transformed(grid)).values
        total += amp * b
    if noise > 0:
        total += _noise_field(grid, noise, np.random.default_rng(seed))
    tail = spectral_tail(total, grid)
    if tail > SPECTRAL_TAIL_MAX:
        raise ResolutionError(f"synthesized field is not resolved (spectral tail {tail:.2e})")
    return Field(grid, total)


def _window_distance(r: Field, qref: GroundState, f: BubbleFit, radius: float) -> float:
    """Unit-amplitude distance ``||r - e^{i gamma} Q_{lam,x0}||`` over ``|x - x0| <= radius lam``."""
    obj = _Objective(r, qref)
    _, _, rho = obj._rho(f.lam, np.array(f.x0))
    diff = r.values - np.exp(1j * f.gamma) * obj.bubble(f.lam, np.array(f.x0))
    return float(np.sqrt(r.grid.weight * np.sum(np.abs(diff[rho <= radius]) ** 2)))


def extract_bubbles(
    u: Field, qref: GroundState, max_j: int = 4, stop: float = 0.5, window: float = 10.0
) -> list[BubbleFit]:
    """Greedy peeling: fit, subtract, repeat.

    Each step fits a bubble with free amplitude, centered initially at the
    ``|r|^2`` maximum of the current remainder ``r``.  Extraction stops after
    ``max_j`` bubbles or when the unit-amplitude distance
    ``||r - e^{i gamma} Q_{lam,x0}||`` exceeds ``stop * ||Q||``.  The distance
    is taken over the ball ``|x - x0| <= window * lam`` so that bubbles not yet
    extracted, which live at separated parameters, do not count against the
    current one.  A fitted amplitude below ``stop`` also ends the peeling, so
    with ``stop = 0.5`` bubbles lighter than ``||Q||^2 / 4`` are left in the
    remainder.  The ``residual`` of the last fit is the final
    remainder.
    """
    if max_j < 1:
        raise ValidationError("max_j must be at least 1")
    qnorm = np.sqrt(qref.mass)
    fits: list[BubbleFit] = []
    r = u
    for _ in range(max_j):
        # a bubble of amplitude >= stop needs about stop^2 ||Q||^2 of mass
        if sp.gradient_norm_sq(r) == 0.0 or sp.lp_norm(r, 2) < 0.5 * stop * qnorm:
            break
        f = fit_bubble(r, qref, free_amplitude=True, x0_init="argmax")
        if f.amplitude < stop or _window_distance(r, qref, f, window) > stop * qnorm:
            break
        fits.append(f)
        r = f.residual
    return fits
