"""Trajectory record produced by the integrator and consumed by diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import InsufficientDataError
from .spectral import Field, read_snapshot, write_snapshot

Termination = Literal["reached_t_end", "blowup_detected", "dt_underflow"]

# column order of the CSV written by the CLI; momentum_y only in d=2
CSV_COLUMNS_1D = ["t", "dt", "mass", "energy", "momentum_x", "grad_norm_sq", "variance", "lambda", "linf"]
CSV_COLUMNS_2D = CSV_COLUMNS_1D[:5] + ["momentum_y"] + CSV_COLUMNS_1D[5:]


@dataclass
class TrajectoryRecord:
    """Diagnostics rows (one per recorded time) plus optional field snapshots."""

    d: int
    rows: list[dict] = field(default_factory=list)
    snapshots: list[tuple[float, Field]] = field(default_factory=list)
    termination: Termination | None = None
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    @property
    def snapshot_fields(self) -> list[Field]:
        return [f for _, f in self.snapshots]

    @property
    def columns(self) -> list[str]:
        return CSV_COLUMNS_1D if self.d == 1 else CSV_COLUMNS_2D

    def require_snapshots(self, n: int) -> None:
        if len(self.snapshots) < n:
            raise InsufficientDataError(f"need at least {n} snapshots, trajectory has {len(self.snapshots)}")

    def to_csv(self, path) -> None:
        cols = self.columns
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                fh.write(",".join(repr(float(r[c])) for c in cols) + "\n")

    @classmethod
    def from_csv(cls, path, d: int | None = None) -> "TrajectoryRecord":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = []
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(dict(zip(header, map(float, line.split(",")))))
        if d is None:
            d = 2 if "momentum_y" in header else 1
        return cls(d=d, rows=rows)

    def write_snapshots(self, directory) -> list[Path]:
        """Write every snapshot as ``snap_00000.nlsf``, ... into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, (t, f) in enumerate(self.snapshots):
            p = directory / f"snap_{i:05d}.nlsf"
            write_snapshot(p, f, t)
            paths.append(p)
        return paths

    @classmethod
    def load(cls, csv_path, snapshot_dir=None) -> "TrajectoryRecord":
        """Read a CSV written by :meth:`to_csv` plus the snapshots in ``snapshot_dir``.

        ``snapshot_dir`` defaults to ``<csv stem>_snaps`` next to the CSV, if present.
        """
        csv_path = Path(csv_path)
        rec = cls.from_csv(csv_path)
        if snapshot_dir is None:
            snapshot_dir = csv_path.with_name(csv_path.stem + "_snaps")
        snapshot_dir = Path(snapshot_dir)
        if snapshot_dir.is_dir():
            rec.snapshots = [read_snapshot(p)[::-1] for p in sorted(snapshot_dir.glob("snap_*.nlsf"))]
        return rec
