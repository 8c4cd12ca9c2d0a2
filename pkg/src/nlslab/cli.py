"""Command-line interface: ``nlslab <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
``NLSLAB_THREADS`` caps the FFT and kernel worker count.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import diagnostics as dg
from . import spectral as sp
from .errors import NumericalError, ValidationError
from .evolution import Schedule, SolverConfig, default_grad_max, evolve
from .ground_state import GroundState, solve_ground_state
from .spectral import Grid, read_snapshot, write_snapshot
from .symmetry import (
    GroupElement,
    apply_group,
    galilean,
    inverse,
    phase_sym,
    pseudo_conformal,
    scale_sym,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _params(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValidationError(f"parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_ground_state(args) -> int:
    L = args.L or sp.DEFAULT_EXTENT[args.dim]
    q = solve_ground_state(Grid(args.dim, L, args.N), tol=args.tol)
    if args.out:
        write_snapshot(args.out, q.field, 0.0)
    _emit({
        "mass": q.mass,
        "gradient_norm_sq": q.gradient_norm_sq,
        "residual": q.residual,
        "energy": q.energy,
        "peak": q.peak,
        "iterations": q.iterations,
    })
    return EXIT_OK


def cmd_evolve(args) -> int:
    u0, t0 = read_snapshot(args.input)
    grad_max = default_grad_max(u0.grid) if args.grad_max is None else args.grad_max
    cfg = SolverConfig(t_end=args.t_end, dt0=args.dt0, adapt_c=args.adapt_c, grad_max=grad_max)
    sched = Schedule(period=args.row_every, snapshot_period=args.snap_every)
    traj = evolve(u0, cfg, sched, t_start=t0)
    csv = Path(args.csv)
    traj.to_csv(csv)
    if traj.snapshots:
        traj.write_snapshots(args.snap_dir or csv.with_name(csv.stem + "_snaps"))
    _emit({"termination": traj.termination, "steps": traj.steps, "t_final": float(traj.times[-1])})
    return EXIT_OK


def cmd_blowup(args) -> int:
    from .lab import load_spec, run_experiment

    spec = load_spec(args.spec)
    if args.out:
        spec = type(spec)(**{**spec.__dict__, "output_dir": args.out})
    report = run_experiment(spec)
    print(report.to_json())
    return EXIT_OK


def cmd_fit_profile(args) -> int:
    from .profile_fit import fit_bubble

    u, t = read_snapshot(args.input)
    q = GroundState.from_field(read_snapshot(args.q)[0])
    f = fit_bubble(u, q, radial=args.radial)
    _emit({
        "t": t,
        "lambda": f.lam,
        "gamma": f.gamma,
        "x0": list(f.x0),
        "distance": f.distance,
        "converged": f.converged,
        "iterations": f.iterations,
    })
    return EXIT_OK


def cmd_concentration(args) -> int:
    from .profile_fit import concentration_scan
    from .trajectory import TrajectoryRecord

    traj = TrajectoryRecord.load(args.traj, args.snap_dir)
    table = concentration_scan(traj, args.T, args.exp, args.eps, args.tol)
    if args.out:
        Path(args.out).write_text(table.to_csv_text())
    else:
        sys.stdout.write(table.to_csv_text())
    print(f"# flag={table.flag}", file=sys.stderr)
    return EXIT_OK


def cmd_symmetry_check(args) -> int:
    u, t = read_snapshot(args.input)
    p = _params(args.params)
    d = u.grid.d
    n0 = sp.lp_norm(u, 2)
    op = args.op
    if op == "group":
        g = GroupElement(
            x0=_floats(p.get("x0", "0")),
            xi0=_floats(p.get("xi0", "0")),
            lam=float(p.get("lam", 1.0)),
            t0=float(p.get("t0", 0.0)),
        )
        v = apply_group(g, u)
        h, c = inverse(g, d)
        back = apply_group(h, v) * (1.0 / c)
    elif op == "galilean":
        xi = _floats(p.get("xi", "0"))
        tt = float(p.get("t", t))
        v = galilean(u, tt, xi)
        back = galilean(v, tt, tuple(-x for x in xi))
    elif op == "scale":
        lam = float(p.get("lam", 1.0))
        v = scale_sym(u, lam)
        back = scale_sym(v, 1.0 / lam)
    elif op == "phase":
        th = float(p.get("theta", 0.0))
        v = phase_sym(u, th)
        back = phase_sym(v, -th)
    else:
        tt = float(p.get("t", t))
        v, s = pseudo_conformal(u, tt)
        back, _ = pseudo_conformal(v, s)
    _emit({
        "op": op,
        "unitarity_defect": abs(sp.lp_norm(v, 2) - n0) / n0 if n0 else 0.0,
        "roundtrip_defect": sp.lp_norm(back - u, 2) / n0 if n0 else 0.0,
    })
    return EXIT_OK


DIAGNOSE_OPS = (
    "conserved", "variance", "sharp_gn", "truncated_energy", "truncated_energy_ratio",
    "morawetz_action", "commutator_error", "lp_norms",
)


def cmd_diagnose(args) -> int:
    from .ground_state import reference_state

    u, t = read_snapshot(args.input)
    ops = DIAGNOSE_OPS if args.all or not args.op else tuple(args.op)
    trunc = dg.TruncationParams(R=args.R, K=args.K, C=args.C)
    out: dict[str, float] = {"t": t}
    for op in ops:
        if op == "conserved":
            c = dg.conserved(u)
            out["mass"] = c.mass
            out["energy"] = c.energy
            for j, pj in enumerate(c.momentum):
                out[f"momentum_{'xy'[j]}"] = pj
        elif op == "variance":
            out["variance"] = dg.variance(u)
        elif op == "sharp_gn":
            qm = reference_state(u.grid.d).mass
            out["sharp_gn_defect"] = dg.sharp_gn_defect(u, qm)
            out["sharp_gn_defect_printed"] = dg.sharp_gn_defect_printed(u, qm)
        elif op == "truncated_energy":
            out["truncated_energy"] = dg.truncated_energy(u, trunc)
        elif op == "truncated_energy_ratio":
            out["truncated_energy_ratio"] = dg.truncated_energy_ratio(u, trunc)
        elif op == "morawetz_action":
            out["morawetz_action"] = dg.morawetz_action(u, dg.Cutoff("psi_virial", args.R), trunc)
        elif op == "commutator_error":
            out["commutator_error"] = dg.commutator_error(u, trunc)
        elif op == "lp_norms":
            out["low_norm"] = sp.lp_norm(dg.lp_project(u, trunc.frequency, "low"), 2)
            out["high_norm"] = sp.lp_norm(dg.lp_project(u, trunc.frequency, "high"), 2)
    _emit({k: float(v) for k, v in out.items()})
    return EXIT_OK


def cmd_report(args) -> int:
    from .lab import report_to_markdown

    data = json.loads(Path(args.report).read_text())
    sys.stdout.write(report_to_markdown(data))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlslab", description="Mass-critical NLS laboratory")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground-state", help="compute Q and write it as a snapshot")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--L", type=float, default=None, help="box extent (default per dimension)")
    p.add_argument("--N", type=int, default=1024)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ground_state)

    p = sub.add_parser("evolve", help="integrate a snapshot forward in time")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt0", type=float, default=1e-3)
    p.add_argument("--adapt-c", type=float, default=0.05)
    p.add_argument("--grad-max", type=float, default=None, help="default: focusing scale of 8 grid cells")
    p.add_argument("--csv", required=True)
    p.add_argument("--snap-every", type=float, default=None)
    p.add_argument("--row-every", type=float, default=None)
    p.add_argument("--snap-dir", default=None)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("blowup", help="run an experiment spec file")
    p.add_argument("spec")
    p.add_argument("--out", default=None, help="override output_dir")
    p.set_defaults(func=cmd_blowup)

    p = sub.add_parser("fit-profile", help="fit a snapshot against a ground-state snapshot")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--radial", action="store_true")
    p.set_defaults(func=cmd_fit_profile)

    p = sub.add_parser("concentration", help="mass in shrinking windows along a trajectory")
    p.add_argument("--traj", required=True, help="trajectory CSV; snapshots from <stem>_snaps/")
    p.add_argument("--snap-dir", default=None)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--exp", type=float, default=2.0 / 3.0)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_concentration)

    p = sub.add_parser("symmetry-check", help="unitarity and round-trip defects of a symmetry")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--op", required=True, choices=("group", "galilean", "scale", "phase", "pconf"))
    p.add_argument("--params", nargs="*", default=[], help="key=value pairs, e.g. lam=0.5 x0=1,0")
    p.set_defaults(func=cmd_symmetry_check)

    p = sub.add_parser("diagnose", help="scalar functionals of a snapshot")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--all", action="store_true")
    p.add_argument("--op", action="append", choices=DIAGNOSE_OPS)
    p.add_argument("--R", type=float, default=5.0)
    p.add_argument("--K", type=float, default=4.0)
    p.add_argument("--C", type=float, default=8.0)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("report", help="render a report JSON as a Markdown table")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"nlslab: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"nlslab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
