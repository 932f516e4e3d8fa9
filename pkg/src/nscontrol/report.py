"""Run reports, CSV output, VTK export, and convergence orders."""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["RunReport", "CSV_COLUMNS", "write_report_csv", "read_report_csv",
           "convergence_order", "export_vtk", "read_vtk"]

CSV_COLUMNS = ("problem", "scheme", "level", "nu", "beta", "dof", "oseen_its",
               "avg_fgmres", "avg_fgmres_excl_stokes", "wall_s", "v_err",
               "zeta_err", "converged")

# nonconverged runs are averaged over this many leading Oseen steps
DAGGER_WINDOW = 10


@dataclass
class RunReport:
    problem: str
    scheme: str
    level: int
    nu: float
    beta: float
    dof: int
    fgmres_its: list = field(default_factory=list)
    fgmres_converged: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    converged: bool = False
    wall_s: float = 0.0
    v_err: Optional[float] = None
    zeta_err: Optional[float] = None
    divergence: list = field(default_factory=list)   # ||B v|| / ||v|| per slot

    @property
    def oseen_its(self):
        return len(self.fgmres_its)

    def _window(self, its):
        return its if self.converged else its[:DAGGER_WINDOW]

    @property
    def avg_fgmres(self):
        its = self._window(self.fgmres_its)
        return float(np.mean(its)) if its else float("nan")

    @property
    def avg_fgmres_excl_stokes(self):
        its = self._window(self.fgmres_its)[1:]
        return float(np.mean(its)) if its else float("nan")

    def row(self):
        return {
            "problem": self.problem, "scheme": self.scheme, "level": self.level,
            "nu": self.nu, "beta": self.beta, "dof": self.dof,
            "oseen_its": self.oseen_its, "avg_fgmres": self.avg_fgmres,
            "avg_fgmres_excl_stokes": self.avg_fgmres_excl_stokes,
            "wall_s": self.wall_s, "v_err": self.v_err, "zeta_err": self.zeta_err,
            "converged": self.converged,
        }


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else f"{value:.5e}"
    return str(value)


def write_report_csv(reports, path):
    """One row per run; floats with 6 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rep in reports:
            row = rep.row()
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_report_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def convergence_order(errors):
    """log2(e_i / e_{i+1}) for consecutive levels."""
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise ValueError("need at least two errors")
    if any(not e > 0 for e in errors):
        raise ValueError("errors must be positive")
    return [math.log2(a / b) for a, b in zip(errors, errors[1:])]


def export_vtk(path, disc, velocity, adjoint, pressure, title="nscontrol"):
    """Legacy ASCII STRUCTURED_GRID on the Q2 nodes.

    ``velocity`` and ``adjoint`` are full Q2 vectors ``[u1; u2]``; ``pressure``
    is a Q1 vector, interpolated bilinearly onto the Q2 points.
    """
    g = disc.grid
    n = 2 * g.elements_per_side + 1
    npts = g.n_q2
    vel = np.asarray(velocity, dtype=float).reshape(2, npts)
    adj = np.asarray(adjoint, dtype=float).reshape(2, npts)
    prs = disc.q1_to_q2_nodes() @ np.asarray(pressure, dtype=float)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_GRID",
             f"DIMENSIONS {n} {n} 1", f"POINTS {npts} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in g.q2_nodes]
    lines.append(f"POINT_DATA {npts}")
    for name, arr in (("velocity", vel), ("adjoint_velocity", adj)):
        lines.append(f"VECTORS {name} double")
        lines += [f"{a:.17g} {b:.17g} 0" for a, b in arr.T]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [f"{p:.17g}" for p in prs]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Parse a file written by :func:`export_vtk` into arrays."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out = {}
    i = 0
    while i < len(tokens):
        line = tokens[i].split()
        if not line:
            i += 1
            continue
        if line[0] == "POINTS":
            npts = int(line[1])
            out["points"] = np.array([tokens[i + 1 + k].split() for k in range(npts)],
                                     dtype=float)
            i += npts + 1
        elif line[0] == "VECTORS":
            out[line[1]] = np.array([tokens[i + 1 + k].split() for k in range(npts)],
                                    dtype=float)
            i += npts + 1
        elif line[0] == "SCALARS":
            out[line[1]] = np.array([tokens[i + 2 + k] for k in range(npts)], dtype=float)
            i += npts + 2
        else:
            i += 1
    return out
