"""Experiment orchestration: declarative run specs, blow-up scaling fits and JSON reports.

Spec files are flat ``key = value`` text (``#`` comments allowed) with units in
the key names: ``_t`` for time, ``_len`` for length and ``_per_len`` for
inverse length.  Keys and defaults are listed in :data:`SPEC_KEYS`.
"""

from __future__ import annotations

import configparser
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, _accel
from . import diagnostics as dg
from . import spectral as sp
from .errors import (
    ConfigError,
    InsufficientDataError,
    NLSLabError,
    NotApplicableError,
    ValidationError,
)
from .evolution import Schedule, SolverConfig, default_grad_max, evolve
from .ground_state import reference_state
from .profile_fit import ScaleSeries, concentration_scan, fit_bubble, weak_limit_witness
from .spectral import Field, Grid, read_snapshot
from .symmetry import minimal_mass_blowup
from .trajectory import TrajectoryRecord

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentSpec",
    "RunReport",
    "LogLogReport",
    "REPORT_SCHEMA",
    "REPORT_SCHEMA_VERSION",
    "SPEC_KEYS",
    "load_spec",
    "initial_field",
    "run_experiment",
    "estimate_blowup_time",
    "loglog_fit",
    "report_to_markdown",
]

REPORT_SCHEMA_VERSION = 1
INITIAL_KINDS = ("ground_state", "scaled_ground_state", "gaussian", "pconf_blowup", "snapshot")
OPS = ("fit", "concentration", "virial", "truncation")


# --------------------------------------------------------------------------
# blow-up scaling fits
# --------------------------------------------------------------------------


def _as_series(series) -> ScaleSeries:
    if isinstance(series, ScaleSeries):
        return series
    if isinstance(series, TrajectoryRecord):
        return ScaleSeries.from_trajectory(series)
    t, lam = series
    return ScaleSeries(t, lam)


def estimate_blowup_time(series) -> float:
    """Blow-up time from ``lam(t)^2 = a (T - t)`` fitted over the final decade.

    The final decade is the tail of the series after ``lam`` last exceeded ten
    times its final minimum; earlier rows are ignored.  Residuals are weighted
    by ``1 / lam^2`` (relative error in ``lam^2``) so the rows nearest the
    singularity are not swamped by the largest values.  Rescaling
    ``(t, lam) -> (mu^2 t, mu lam)`` rescales ``T`` by ``mu^2``.

    Raises
    ------
    InsufficientDataError
        Fewer than 10 rows in the series or its final decade.
    NotApplicableError
        The series does not focus.
    """
    s = _as_series(series)
    if len(s) < 10:
        raise InsufficientDataError(f"need at least 10 rows, series has {len(s)}")
    if s.shrink_factor < 2.0:
        raise NotApplicableError("scale series does not focus")
    tail = s.final_decade()
    if len(tail) < 10:
        raise InsufficientDataError(f"final decade has only {len(tail)} rows")
    lam2 = tail.lam**2
    slope, intercept = np.polyfit(tail.t, lam2, 1, w=1.0 / lam2)
    if not slope < 0:
        raise NotApplicableError("lambda^2 is not decreasing over the final decade")
    return float(-intercept / slope)


@dataclass
class LogLogReport:
    beta: float
    power_residual: float
    corrected_beta: float
    corrected_residual: float
    rows: int
    consistent: bool


def loglog_fit(series, T: float, beta_range: tuple[float, float] = (0.45, 0.55)) -> LogLogReport:
    """Compare a pure power law with the log-log corrected law over the final decade.

    Fits ``log lam = beta log(T - t) + c`` and
    ``log lam + (1/2) log ln|ln(T - t)| = beta' log(T - t) + c'`` by least
    squares and reports both RMS residuals.  Only rows with ``0 < T - t < 1/e``
    enter, where ``ln|ln(T - t)| > 0``.  The series is log-log-consistent when
    ``beta`` lies in ``beta_range`` and the corrected residual is the smaller.
    """
    s = _as_series(series)
    if len(s) < 3 or s.shrink_factor < 2.0:
        raise NotApplicableError("scale series does not focus")
    tail = s.final_decade()
    rem = T - tail.t
    keep = (rem > 0) & (rem < np.exp(-1.0))
    if np.count_nonzero(keep) < 5:
        raise InsufficientDataError("fewer than 5 final-decade rows with 0 < T - t < 1/e")
    ls = np.log(rem[keep])
    ll = np.log(tail.lam[keep])

    def fit(y):
        coef = np.polyfit(ls, y, 1)
        r = y - np.polyval(coef, ls)
        return float(coef[0]), float(np.sqrt(np.mean(r * r)))

    beta, res_p = fit(ll)
    beta_c, res_c = fit(ll + 0.5 * np.log(np.log(np.abs(ls))))
    ok = beta_range[0] <= beta <= beta_range[1] and res_c < res_p
    return LogLogReport(beta, res_p, beta_c, res_c, int(np.count_nonzero(keep)), bool(ok))


# --------------------------------------------------------------------------
# experiment spec
# --------------------------------------------------------------------------

# key -> (type, default); None default means required
SPEC_KEYS: dict[str, tuple[type, object]] = {
    "name": (str, None),
    "dim": (int, 1),
    "grid_extent_len": (float, 0.0),  # 0 selects the default extent
    "grid_points": (int, 1024),
    "initial": (str, "ground_state"),
    "alpha": (float, 0.0),
    "gaussian_amplitude": (float, 1.0),
    "gaussian_width_len": (float, 1.0),
    "pconf_t_start_t": (float, -1.0),
    "snapshot_path": (str, ""),
    "t_end_t": (float, None),
    "dt0_t": (float, 1e-3),
    "dt_min_t": (float, 1e-12),
    "adapt_c": (float, 0.05),
    "grad_max_per_len": (str, "auto"),  # number, "auto" (8 grid cells) or "inf"
    "dealias": (str, "default"),
    "row_period_t": (float, 0.0),
    "row_every_steps": (int, 0),
    "snapshot_period_t": (float, 0.0),
    "snapshot_lambda_ratio": (float, 0.0),
    "ops": (str, "fit,concentration"),
    "truncation_R_len": (float, 0.0),
    "truncation_K_per_len": (float, 0.0),
    "truncation_C": (float, 8.0),
    "concentration_exponent": (float, 2.0 / 3.0),
    "concentration_eps": (str, "0.02,0.05,0.1"),
    "concentration_tol": (float, 0.01),
    "seed": (int, 0),
    "output_dir": (str, None),
}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    t_end_t: float
    output_dir: str
    dim: int = 1
    grid_extent_len: float = 0.0
    grid_points: int = 1024
    initial: str = "ground_state"
    alpha: float = 0.0
    gaussian_amplitude: float = 1.0
    gaussian_width_len: float = 1.0
    pconf_t_start_t: float = -1.0
    snapshot_path: str = ""
    dt0_t: float = 1e-3
    dt_min_t: float = 1e-12
    adapt_c: float = 0.05
    grad_max_per_len: str = "auto"
    dealias: str = "default"
    row_period_t: float = 0.0
    row_every_steps: int = 0
    snapshot_period_t: float = 0.0
    snapshot_lambda_ratio: float = 0.0
    ops: str = "fit,concentration"
    truncation_R_len: float = 0.0
    truncation_K_per_len: float = 0.0
    truncation_C: float = 8.0
    concentration_exponent: float = 2.0 / 3.0
    concentration_eps: str = "0.02,0.05,0.1"
    concentration_tol: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.initial not in INITIAL_KINDS:
            raise ConfigError(f"initial must be one of {INITIAL_KINDS}, got {self.initial!r}")
        if self.initial == "scaled_ground_state" and not (-0.5 < self.alpha < 0.5):
            raise ConfigError(f"alpha must lie in (-0.5, 0.5), got {self.alpha}")
        if self.initial == "snapshot" and not self.snapshot_path:
            raise ConfigError("initial = snapshot needs snapshot_path")
        if self.initial == "pconf_blowup" and not (self.pconf_t_start_t < self.t_end_t < 0.0):
            raise ConfigError("pconf_blowup needs pconf_t_start_t < t_end_t < 0")
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        unknown = set(self.op_list) - set(OPS)
        if unknown:
            raise ConfigError(f"unknown ops {sorted(unknown)}; choose from {OPS}")
        if self.dealias not in ("default", "on", "off"):
            raise ConfigError("dealias must be default, on or off")

    @property
    def op_list(self) -> list[str]:
        return [o.strip() for o in self.ops.split(",") if o.strip()]

    @property
    def eps_list(self) -> list[float]:
        return [float(e) for e in self.concentration_eps.split(",") if e.strip()]

    @property
    def t_start(self) -> float:
        return self.pconf_t_start_t if self.initial == "pconf_blowup" else 0.0

    def grid(self) -> Grid:
        if self.initial == "snapshot":
            return read_snapshot(self.snapshot_path)[0].grid
        L = self.grid_extent_len or sp.DEFAULT_EXTENT[self.dim]
        return Grid(self.dim, L, self.grid_points)

    def solver_config(self, grid: Grid) -> SolverConfig:
        gm = self.grad_max_per_len.strip().lower()
        grad_max = default_grad_max(grid) if gm == "auto" else float(gm)
        dealias = None if self.dealias == "default" else self.dealias == "on"
        return SolverConfig(
            t_end=self.t_end_t,
            dt0=self.dt0_t,
            dt_min=self.dt_min_t,
            adapt_c=self.adapt_c,
            grad_max=grad_max,
            dealias=dealias,
        )

    def schedule(self) -> Schedule:
        return Schedule(
            period=self.row_period_t or None,
            every_steps=self.row_every_steps or None,
            snapshot_period=self.snapshot_period_t or None,
            snapshot_lambda_ratio=self.snapshot_lambda_ratio or None,
        )

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def load_spec(path) -> ExperimentSpec:
    """Parse a flat ``key = value`` spec file."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    text = Path(path).read_text()
    try:
        parser.read_string("[spec]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse spec file {path}: {exc}") from exc
    raw = dict(parser["spec"])
    unknown = set(raw) - set(SPEC_KEYS)
    if unknown:
        raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
    kw = {}
    for key, (typ, default) in SPEC_KEYS.items():
        if key in raw:
            try:
                kw[key] = typ(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
        elif default is None:
            raise ConfigError(f"missing required key {key}")
    return ExperimentSpec(**kw)


def initial_field(spec: ExperimentSpec, grid: Grid) -> Field:
    """Initial data described by ``spec`` (at time ``spec.t_start``)."""
    kind = spec.initial
    if kind == "snapshot":
        return read_snapshot(spec.snapshot_path)[0]
    q = reference_state(grid.d)
    if kind == "ground_state":
        return q.transformed(grid)
    if kind == "scaled_ground_state":
        return q.transformed(grid) * (1.0 + spec.alpha)
    if kind == "gaussian":
        a, w = spec.gaussian_amplitude, spec.gaussian_width_len
        return Field(grid, a * np.exp(-grid.r2 / (2.0 * w * w)))
    return minimal_mass_blowup(q, grid, spec.pconf_t_start_t)


# --------------------------------------------------------------------------
# run report
# --------------------------------------------------------------------------

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_SERIES = {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}

REPORT_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "schema_version", "name", "seed", "termination", "steps", "t_final",
        "drifts", "energy_initial", "T_est", "lambda_summary", "loglog",
        "fit_distance", "weak_limit_terminal_deviation", "concentration",
        "pconf_lambda_defect", "truncated_energy_ratio", "virial_defect",
        "wall_time_s", "backend", "version",
    ],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "termination": {"enum": ["reached_t_end", "blowup_detected", "dt_underflow"]},
        "steps": {"type": "integer", "minimum": 0},
        "t_final": _NUM,
        "drifts": {
            "type": "object",
            "required": ["mass", "energy", "momentum"],
            "properties": {"mass": _NUM, "energy": _NUM, "momentum": _NUM},
        },
        "energy_initial": _NUM,
        "T_est": _NUM_OR_NULL,
        "lambda_summary": {
            "type": "object",
            "required": ["initial", "final", "min", "shrink_factor", "monotone_final_decade"],
            "properties": {
                "initial": _NUM, "final": _NUM, "min": _NUM, "shrink_factor": _NUM,
                "monotone_final_decade": {"type": "boolean"},
            },
        },
        "loglog": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["beta", "power_residual", "corrected_beta", "corrected_residual", "rows", "consistent"],
                },
            ]
        },
        "fit_distance": _SERIES,
        "weak_limit_terminal_deviation": _NUM_OR_NULL,
        "concentration": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "pconf_lambda_defect": _NUM_OR_NULL,
        "truncated_energy_ratio": _NUM_OR_NULL,
        "virial_defect": _NUM_OR_NULL,
        "wall_time_s": _NUM,
        "backend": {"type": "string"},
        "version": {"type": "string"},
    },
}


@dataclass
class RunReport:
    name: str
    seed: int
    termination: str
    steps: int
    t_final: float
    drifts: dict
    energy_initial: float
    T_est: float | None
    lambda_summary: dict
    loglog: dict | None
    fit_distance: list = field(default_factory=list)
    weak_limit_terminal_deviation: float | None = None
    concentration: dict = field(default_factory=dict)
    pconf_lambda_defect: float | None = None
    truncated_energy_ratio: float | None = None
    virial_defect: float | None = None
    wall_time_s: float = 0.0
    backend: str = ""
    version: str = __version__
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        if data.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValidationError(f"unsupported report schema version {data.get('schema_version')}")
        return cls(**data)


def report_to_markdown(report: dict) -> str:
    """Two-column Markdown table of a report (nested objects flattened with dots)."""
    flat: list[tuple[str, object]] = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        elif isinstance(obj, list):
            flat.append((prefix, f"{len(obj)} entries"))
        else:
            flat.append((prefix, obj))

    walk("", report)
    lines = ["| quantity | value |", "|---|---|"]
    for k, v in flat:
        if isinstance(v, float):
            v = f"{v:.6g}"
        lines.append(f"| {k} | {v} |")
    return "\n".join(lines) + "\n"


def _with_context(exc: NLSLabError, context: str) -> NLSLabError:
    exc.args = (f"{context}: {exc.args[0] if exc.args else ''}",) + tuple(exc.args[1:])
    return exc


def _drifts(traj: TrajectoryRecord) -> dict:
    m = traj.column("mass")
    e = traj.column("energy")
    scale = traj.rows[0]["energy_scale"]
    mom = np.abs(traj.column("momentum_x"))
    if traj.d == 2:
        mom = np.maximum(mom, np.abs(traj.column("momentum_y")))
    return {
        "mass": float(np.max(np.abs(m - m[0])) / m[0]) if m[0] > 0 else 0.0,
        "energy": float(np.max(np.abs(e - e[0])) / scale) if scale > 0 else 0.0,
        "momentum": float(np.max(mom)),
    }


def run_experiment(spec: ExperimentSpec) -> RunReport:
    """Run ``spec``: evolve, analyse, and write ``trajectory.csv``, snapshots and ``report.json``.

    Output goes to ``spec.output_dir`` (created if needed).  Module errors are
    re-raised with the experiment name prepended.
    """
    t0 = time.perf_counter()
    out = Path(spec.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    try:
        report = _run(spec, out)
    except NLSLabError as exc:
        raise _with_context(exc, f"experiment {spec.name!r}") from exc
    report.wall_time_s = time.perf_counter() - t0
    (out / "report.json").write_text(report.to_json())
    return report


def _run(spec: ExperimentSpec, out: Path) -> RunReport:
    grid = spec.grid()
    u0 = initial_field(spec, grid)
    cfg = spec.solver_config(grid)
    traj = evolve(u0, cfg, spec.schedule(), t_start=spec.t_start)
    traj.to_csv(out / "trajectory.csv")
    if traj.snapshots:
        traj.write_snapshots(out / "trajectory_snaps")

    series = ScaleSeries.from_trajectory(traj)
    lam = series.lam
    focusing = len(series) >= 10 and series.shrink_factor >= 2.0
    summary = {
        "initial": float(lam[0]),
        "final": float(lam[-1]),
        "min": float(lam.min()),
        "shrink_factor": float(series.shrink_factor),
        "monotone_final_decade": bool(series.monotone_decreasing()) if focusing else False,
    }
    T_est, ll = None, None
    if focusing:
        try:
            T_est = estimate_blowup_time(series)
            ll = asdict(loglog_fit(series, T_est))
        except (NotApplicableError, InsufficientDataError) as exc:
            log.info("scaling fits skipped: %s", exc)

    radial = spec.initial != "snapshot"
    q = reference_state(grid.d)
    fit_series, weak_dev = [], None
    if "fit" in spec.op_list and traj.snapshots:
        fits = [fit_bubble(f, q, radial=radial) for f in traj.snapshot_fields]
        fit_series = [[float(t), float(f.distance)] for t, f in zip(traj.snapshot_times, fits)]
        weak = weak_limit_witness(traj.snapshot_fields[-1:], fits[-1:], q)
        weak_dev = weak.terminal_max_deviation

    conc = {}
    if "concentration" in spec.op_list and T_est is not None and len(traj.snapshots) >= 2:
        snaps = [(t, f) for t, f in traj.snapshots if t < T_est]
        sub = TrajectoryRecord(d=traj.d, rows=traj.rows, snapshots=snaps, termination=traj.termination)
        for eps in spec.eps_list:
            try:
                table = concentration_scan(
                    sub, T_est, spec.concentration_exponent, eps, spec.concentration_tol,
                    center=np.zeros(grid.d) if radial else None,
                )
                conc[f"{eps:g}"] = table.flag
            except (NotApplicableError, InsufficientDataError) as exc:
                log.info("concentration scan skipped: %s", exc)

    virial = None
    if "virial" in spec.op_list:
        try:
            virial = dg.virial_check(traj).max_relative_defect
        except NLSLabError as exc:
            log.info("virial check skipped: %s", exc)

    trunc_ratio = None
    if "truncation" in spec.op_list:
        # R and K default to 10 lambda and 10 / lambda at the final time
        lam_end = float(lam[-1])
        tp = dg.TruncationParams(
            R=spec.truncation_R_len or 10.0 * lam_end,
            K=spec.truncation_K_per_len or 10.0 / lam_end,
            C=spec.truncation_C,
        )
        if traj.snapshots:
            trunc_ratio = dg.truncated_energy_ratio(traj.snapshots[-1][1], tp)

    pconf = None
    if spec.initial == "pconf_blowup":
        t = traj.times
        pconf = float(np.max(np.abs(traj.column("lambda_inf") - np.abs(t)) / np.abs(t)))

    return RunReport(
        name=spec.name,
        seed=spec.seed,
        termination=traj.termination,
        steps=traj.steps,
        t_final=float(traj.times[-1]),
        drifts=_drifts(traj),
        energy_initial=float(traj.rows[0]["energy"]),
        T_est=T_est,
        lambda_summary=summary,
        loglog=ll,
        fit_distance=fit_series,
        weak_limit_terminal_deviation=weak_dev,
        concentration=conc,
        pconf_lambda_defect=pconf,
        truncated_energy_ratio=trunc_ratio,
        virial_defect=virial,
        backend=_accel.backend(),
    )
