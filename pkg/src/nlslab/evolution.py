"""Symmetric split-step integration of ``i u_t + Delta u = -|u|^{4/d} u``.

Each Strang step is: free half step in Fourier space, exact nonlinear phase
rotation ``u <- u exp(i dt |u|^{4/d})`` (the modulus is invariant under the
nonlinear flow), free half step.  The step size follows
``dt = adapt_c / ||grad u||_2^2`` capped by ``dt0``, so the number of steps per
halving of the focusing scale stays roughly constant near blow-up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _accel
from . import diagnostics as dg
from . import spectral as sp
from .errors import ConfigError, NumericalBlowupError, ValidationError
from .ground_state import reference_gradient_norm, reference_state
from .spectral import Field, Grid
from .trajectory import TrajectoryRecord

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "Schedule",
    "free_propagator",
    "step",
    "evolve",
    "default_grad_max",
    "dealias_mask",
]


def default_grad_max(grid: Grid, cells: float = 8.0, qgrad: float | None = None) -> float:
    """Gradient norm at which the focusing scale equals ``cells`` grid spacings."""
    qg = reference_gradient_norm(grid.d) if qgrad is None else qgrad
    return qg / (cells * grid.h)


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    dt0: float = 1e-3
    dt_min: float = 1e-12
    adapt_c: float = 0.05
    grad_max: float = np.inf
    dealias: bool | None = None
    nonlinear: bool = True

    def __post_init__(self):
        if not (0.0 < self.dt_min < self.dt0):
            raise ConfigError(f"need 0 < dt_min < dt0, got dt_min={self.dt_min}, dt0={self.dt0}")
        if not (0.0 < self.adapt_c <= 1.0):
            raise ConfigError(f"adapt_c must lie in (0, 1], got {self.adapt_c}")
        if not np.isfinite(self.t_end):
            raise ConfigError("t_end must be finite")

    def use_dealias(self, d: int) -> bool:
        return (d == 2) if self.dealias is None else bool(self.dealias)


@dataclass
class Schedule:
    """When to record diagnostics rows and snapshots during :func:`evolve`.

    Rows are written every ``period`` time units (steps are clipped to land on
    these times exactly) and/or every ``every_steps`` steps.  Snapshots follow
    ``snapshot_period`` and/or each time the focusing scale shrinks by
    ``snapshot_lambda_ratio``.  Hooks receive ``(t, field)`` at every row and
    return extra columns; they must not modify their inputs.
    """

    period: float | None = None
    every_steps: int | None = None
    snapshot_period: float | None = None
    snapshot_lambda_ratio: float | None = None
    hooks: list[Callable[[float, Field], dict]] = field(default_factory=list)

    def __post_init__(self):
        for name in ("period", "snapshot_period", "every_steps"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.snapshot_lambda_ratio is not None and not self.snapshot_lambda_ratio > 1.0:
            raise ConfigError(f"snapshot_lambda_ratio must exceed 1, got {self.snapshot_lambda_ratio}")


def free_propagator(u: Field, t: float) -> Field:
    """``e^{it Delta} u``: Fourier symbol ``exp(-i t |xi|^2)``, exact and unitary."""
    if t == 0.0:
        return u
    return Field(u.grid, sp.ifftn(_accel.phase_multiply(sp.fftn(u.values), u.grid.k2, t)))


def dealias_mask(grid: Grid) -> np.ndarray:
    k = np.abs(sp.sfft.fftfreq(grid.N) * grid.N)
    keep = k <= grid.N / 3.0
    if grid.d == 1:
        return keep.astype(float)
    return (keep[:, None] & keep[None, :]).astype(float)


def _strang(v: np.ndarray, V: np.ndarray, grid: Grid, dt: float, nonlinear: bool, mask) -> np.ndarray:
    # V is the spectrum of v; returns the new physical samples
    w = sp.ifftn(_accel.phase_multiply(V, grid.k2, 0.5 * dt))
    if nonlinear:
        w = _accel.nonlinear_phase(w, dt, grid.d)
    W = sp.fftn(w)
    if mask is not None:
        W = W * mask
    return sp.ifftn(_accel.phase_multiply(W, grid.k2, 0.5 * dt))


def step(u: Field, dt: float, nonlinear: bool = True, dealias: bool = False) -> Field:
    """One Strang step of size ``dt`` (negative ``dt`` steps backward in time)."""
    if dt == 0.0 or not np.isfinite(dt):
        raise ValidationError(f"step size must be finite and nonzero, got {dt}")
    mask = dealias_mask(u.grid) if dealias else None
    v = _strang(u.values, sp.fftn(u.values), u.grid, dt, nonlinear, mask)
    if not np.all(np.isfinite(v)):
        raise NumericalBlowupError(f"non-finite samples after a step of size {dt}")
    return Field(u.grid, v)


def _row(t, dt, v, V, grid, g2, qgrad, q_peak) -> dict:
    d = grid.d
    w = grid.weight
    u = Field(grid, v, diverged=True)
    a = v.real * v.real + v.imag * v.imag
    m = w * float(np.sum(a))
    pot = w * _accel.abs_pow_sum(v, 2.0 + 4.0 / d)
    row = {
        "t": t,
        "dt": dt,
        "mass": m,
        "energy": 0.5 * g2 - pot / (2.0 + 4.0 / d),
        "energy_scale": 0.5 * g2 + pot / (2.0 + 4.0 / d),
    }
    for name, p in zip(("momentum_x", "momentum_y"), dg.momentum(u)):
        row[name] = p
    row["grad_norm_sq"] = g2
    row["variance"] = dg.variance(u)
    row["lambda"] = qgrad / np.sqrt(g2) if g2 > 0 else np.inf
    row["linf"] = float(np.sqrt(a.max()))
    linf = row["linf"]
    row["lambda_inf"] = (q_peak / linf) ** (2.0 / d) if linf > 0 else np.inf
    return row


def evolve(
    u0: Field,
    cfg: SolverConfig,
    schedule: Schedule | None = None,
    t_start: float = 0.0,
    qgrad: float | None = None,
) -> TrajectoryRecord:
    """Integrate from ``t_start`` to ``cfg.t_end`` with adaptive Strang steps.

    Stops with ``reached_t_end``, ``blowup_detected`` (``||grad u||_2 > grad_max``)
    or ``dt_underflow`` (adaptive step below ``dt_min``).  The focusing scale
    column is ``lambda = ||grad Q||_2 / ||grad u||_2``.
    """
    schedule = schedule or Schedule()
    grid = u0.grid
    d = grid.d
    qgrad = reference_gradient_norm(d) if qgrad is None else qgrad
    q_peak = reference_state(d).peak if d == 2 else 3.0**0.25
    mask = dealias_mask(grid) if cfg.use_dealias(d) else None
    w = grid.weight
    k2 = grid.k2

    # state: spectrum W after the last nonlinear substep with a pending free half step
    W = sp.fftn(u0.values)
    pending = 0.0
    g2 = w * float(np.sum(k2 * (W.real**2 + W.imag**2)))
    if cfg.grad_max <= np.sqrt(g2):
        raise ConfigError(f"grad_max={cfg.grad_max:g} must exceed ||grad u0||={np.sqrt(g2):.4g}")
    if cfg.t_end <= t_start:
        raise ConfigError("t_end must be later than the start time")
    dt_first = min(cfg.dt0, cfg.adapt_c / g2) if g2 > 0 else cfg.dt0
    if dt_first < cfg.dt_min:
        raise ConfigError(f"initial adaptive step {dt_first:.3e} is below dt_min={cfg.dt_min:.3e}")

    rec = TrajectoryRecord(d=d)
    t = t_start
    n = 0
    next_row = t_start + schedule.period if schedule.period else np.inf
    next_snap = t_start + schedule.snapshot_period if schedule.snapshot_period else np.inf
    snap_lambda = None
    cache = {}

    def current():
        # physical samples at time t (completes the pending half step)
        if "v" not in cache:
            V = _accel.phase_multiply(W, k2, pending) if pending else W
            cache["V"] = V
            cache["v"] = sp.ifftn(V)
        return cache["v"], cache["V"]

    def record(dt_used):
        v, V = current()
        row = _row(t, dt_used, v, V, grid, g2, qgrad, q_peak)
        if schedule.hooks:
            f = Field(grid, v)
            for hook in schedule.hooks:
                row.update(hook(t, f))
        rec.rows.append(row)
        return row

    def snapshot():
        rec.snapshots.append((t, Field(grid, current()[0])))

    row = record(0.0)
    if schedule.snapshot_period or schedule.snapshot_lambda_ratio:
        snapshot()
        snap_lambda = row["lambda"]

    eps_t = 1e-12 * max(1.0, abs(cfg.t_end))
    reason = None
    last_dt = 0.0
    while True:
        if np.sqrt(g2) > cfg.grad_max:
            reason = "blowup_detected"
            break
        if t >= cfg.t_end - eps_t:
            reason = "reached_t_end"
            break
        dt = min(cfg.dt0, cfg.adapt_c / g2) if g2 > 0 else cfg.dt0
        if dt < cfg.dt_min:
            reason = "dt_underflow"
            break
        target = min(cfg.t_end, next_row, next_snap)
        clipped = t + dt >= target - eps_t
        if clipped:
            dt = target - t
        v = sp.ifftn(_accel.phase_multiply(W, k2, pending + 0.5 * dt))
        if cfg.nonlinear:
            v = _accel.nonlinear_phase(v, dt, d)
        W = sp.fftn(v)
        if mask is not None:
            W = W * mask
        pending = 0.5 * dt
        cache.clear()
        g2 = w * float(np.sum(k2 * (W.real**2 + W.imag**2)))
        if not np.isfinite(g2):
            raise NumericalBlowupError(f"non-finite samples at t={t + dt:.6g}")
        t = target if clipped else t + dt
        n += 1
        last_dt = dt

        on_row = abs(t - next_row) <= eps_t
        on_snap = abs(t - next_snap) <= eps_t
        if on_row:
            next_row += schedule.period
        if on_snap:
            next_snap += schedule.snapshot_period
        lam = qgrad / np.sqrt(g2) if g2 > 0 else np.inf
        snap_due = on_snap or bool(
            schedule.snapshot_lambda_ratio
            and snap_lambda is not None
            and lam <= snap_lambda / schedule.snapshot_lambda_ratio
        )
        if on_row or snap_due or (schedule.every_steps and n % schedule.every_steps == 0):
            record(dt)
        if snap_due:
            snapshot()
            snap_lambda = lam

    if rec.rows[-1]["t"] != t:
        record(last_dt)
    if (schedule.snapshot_period or schedule.snapshot_lambda_ratio) and rec.snapshots[-1][0] != t:
        snapshot()
    rec.termination = reason
    rec.steps = n
    log.info("evolve: %s at t=%.6g after %d steps", reason, t, n)
    return rec
