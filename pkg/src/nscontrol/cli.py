"""Command-line driver: config parsing, run dispatch, CSV and VTK output."""

import argparse
import itertools
import logging
import re
import sys
from dataclasses import dataclass

import numpy as np

from .config import SolverConfig
from .fem import LpsConfig
from .problems import KINDS, SCHEMES, ProblemSpec, make_problem
from .report import RunReport, export_vtk, write_report_csv

__all__ = ["ConfigError", "parse_config", "parse_sweep", "run_experiment",
           "export_state_vtk", "main"]

log = logging.getLogger("nscontrol")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _pos_float(text):
    x = float(text)
    if not x > 0 or not np.isfinite(x):
        raise ValueError("must be a positive number")
    return x


def _pos_int(text):
    x = int(text)
    if x < 1:
        raise ValueError("must be a positive integer")
    return x


def _nonneg_float(text):
    x = float(text)
    if x < 0 or not np.isfinite(x):
        raise ValueError("must be nonnegative")
    return x


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _kind(text):
    if text not in KINDS:
        raise ValueError(f"unknown problem, expected one of {', '.join(KINDS)}")
    if text == "custom":
        raise ValueError("custom problems need the Python API (field functions)")
    return text


def _scheme(text):
    if text not in SCHEMES:
        raise ValueError(f"unknown scheme, expected one of {', '.join(SCHEMES)}")
    return text


def _str(text):
    return text


# key -> parser; problem keys first, then solver keys
KEYS = {
    "problem": _kind, "level": _pos_int, "nu": _pos_float, "beta": _pos_float,
    "scheme": _scheme, "tau": _pos_float, "n_t": _pos_int, "stokes": _bool,
    "tol": _pos_float, "restart": _pos_int, "maxit": _pos_int,
    "inner_steps": _pos_int, "cheb_steps": _pos_int,
    "mg_cycles_velocity": _pos_int, "mg_cycles_pressure": _pos_int,
    "mg_smoothing": _pos_int, "epsilon": _pos_float, "delta0": _nonneg_float,
    "lps": _bool, "lps_smooth": _bool, "oseen_max": _pos_int,
    "oseen_tol": _pos_float, "exact_blocks": _bool, "out": _str,
}
SWEEP_KEYS = ("level", "nu", "beta")
SOLVER_KEYS = ("tol", "restart", "maxit", "inner_steps", "cheb_steps",
               "mg_cycles_velocity", "mg_cycles_pressure", "mg_smoothing", "epsilon",
               "oseen_max", "oseen_tol", "exact_blocks")


def _tokens(text):
    """Yield (line number, key, raw value) from key=value text; '#' starts a comment."""
    for lineno, line in enumerate(text.splitlines(), 1):
        body = re.sub(r"\s*=\s*", "=", line.split("#", 1)[0].strip())
        if not body:
            continue
        for tok in body.split():
            if "=" not in tok:
                raise ConfigError(f"line {lineno}: expected key=value, got {tok!r}")
            key, _, value = tok.partition("=")
            if not key or not value:
                raise ConfigError(f"line {lineno}: expected key=value, got {tok!r}")
            yield lineno, key.strip(), value.strip()


def _read(text, lists):
    values, lines = {}, {}
    for lineno, key, raw in _tokens(text):
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser = KEYS[key]
        try:
            if lists and key in SWEEP_KEYS:
                values[key] = [parser(v) for v in raw.split(",") if v]
                if not values[key]:
                    raise ValueError("empty list")
            else:
                values[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        lines[key] = lineno
    return values, lines


def _required(values):
    need = ["problem", "level", "beta"]
    if values.get("problem") != "stokes-manufactured":
        need.append("nu")
    missing = [k for k in need if k not in values]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))


def _build(values, lines, level, nu, beta):
    kind = values["problem"]
    scheme = values.get("scheme")

    def fail(key, msg):
        where = f"line {lines[key]}: " if key in lines else ""
        raise ConfigError(where + msg)

    if kind == "cavity-stationary":
        if scheme not in (None, "none"):
            fail("scheme", "cavity-stationary requires scheme=none")
        if "tau" in values or "n_t" in values:
            fail("tau" if "tau" in values else "n_t", "stationary problems take no time step")
    elif kind == "cavity-instationary":
        if scheme in (None, "none"):
            fail("scheme", "cavity-instationary requires scheme=be or scheme=cn")
    else:
        if scheme not in (None, "cn"):
            fail("scheme", "stokes-manufactured is discretized with scheme=cn")
        if nu is not None and nu != 1.0:
            fail("nu", "stokes-manufactured uses nu=1")
    if "tau" in values and "n_t" in values:
        fail("n_t", "give tau or n_t, not both")
    tau = values.get("tau")
    if "n_t" in values:
        tau = 2.0 / values["n_t"]
    try:
        spec = make_problem(kind, nu=nu if nu is not None else 1.0, beta=beta,
                            scheme=scheme, level=level, tau=tau,
                            stokes=values.get("stokes", False))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    lps_default = LpsConfig()
    lps = LpsConfig(delta0=values.get("delta0", lps_default.delta0),
                    enabled=values.get("lps", lps_default.enabled),
                    smooth=values.get("lps_smooth", lps_default.smooth))
    kw = {k: values[k] for k in SOLVER_KEYS if k in values}
    if kind == "stokes-manufactured" and "tol" not in kw:
        kw["tol"] = 1e-9
    config = SolverConfig(lps=lps, **kw)
    return spec, config, level


def parse_config(text):
    """Parse key=value text into ``(ProblemSpec, SolverConfig, level)``."""
    values, lines = _read(text, lists=False)
    _required(values)
    return _build(values, lines, values["level"], values.get("nu"), values["beta"])


def parse_sweep(text):
    """Like :func:`parse_config` but level, nu and beta may be comma lists.

    Returns ``(runs, out)`` with runs a list of ``(spec, config, level)``.
    """
    values, lines = _read(text, lists=True)
    _required(values)
    grid = [values[k] if k in values else [None] for k in SWEEP_KEYS]
    runs = [_build(values, lines, l, nu, b) for l, nu, b in itertools.product(*grid)]
    return runs, values.get("out")


def run_experiment(spec: ProblemSpec, config: SolverConfig, level):
    """Dispatch to the stationary, backward Euler or Crank-Nicolson solver."""
    if spec.scheme == "none":
        from .stationary import solve_stationary
        state, report = solve_stationary(spec, config, level)
    elif spec.scheme == "be":
        from .backward_euler import solve_be
        state, report = solve_be(spec, config, level)
    elif spec.scheme == "cn":
        from .crank_nicolson import solve_cn
        state, report = solve_cn(spec, config, level)
    else:
        raise ValueError(f"unknown scheme {spec.scheme!r}")
    return report, state


@dataclass
class _Slot:
    v: np.ndarray
    zeta: np.ndarray
    p: np.ndarray
    label: str


def _slots(spec, state, level, time):
    from .tools import get_discretization
    d = get_discretization(level)
    lay = d.layout
    v = state.full_velocity(lay)
    z = state.full_adjoint(lay)
    if spec.scheme == "none":
        return d, [_Slot(v, z, state.p, "")]
    tau, n_t = spec.tau, spec.n_t
    if spec.scheme == "be":
        idx = range(n_t + 1) if time is None else [int(np.clip(round(time / tau), 0, n_t))]
    else:
        # pressure n lives at t_n + tau/2 and is paired with the velocity at t_n
        mid = tau * (np.arange(n_t) + 0.5)
        idx = range(n_t) if time is None else [int(np.argmin(np.abs(mid - time)))]
    return d, [_Slot(v[n], z[n], state.p[n], f"_{n:04d}") for n in idx]


def export_state_vtk(prefix, spec, state, level, time=None):
    """One legacy VTK file per time slot (or only the slot nearest ``time``)."""
    d, slots = _slots(spec, state, level, time)
    paths = []
    for s in slots:
        path = f"{prefix}{s.label}.vtk"
        export_vtk(path, d, s.v, s.zeta, s.p - s.p.mean(), title=f"{spec.kind} level {level}")
        paths.append(path)
    return paths


def _solve_args(args):
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    values, lines = _read(text, lists=False)
    cli = {"problem": args.problem, "level": args.level, "nu": args.nu,
           "beta": args.beta, "scheme": args.scheme, "tau": args.tau, "tol": args.tol}
    for key, raw in cli.items():
        if raw is None:
            continue
        try:
            values[key] = KEYS[key](str(raw))
        except ValueError as exc:
            raise ConfigError(f"--{key}: {exc}") from None
        lines.pop(key, None)
    _required(values)
    return _build(values, lines, values["level"], values.get("nu"), values["beta"])


def _summary(rep: RunReport):
    flag = "" if rep.converged else " (not converged)"
    extra = ""
    if rep.v_err is not None:
        extra = f" v_err={rep.v_err:.3e} zeta_err={rep.zeta_err:.3e}"
    return (f"{rep.problem} {rep.scheme} l={rep.level} nu={rep.nu:g} beta={rep.beta:g} "
            f"dof={rep.dof} oseen={rep.oseen_its} avg_fgmres={rep.avg_fgmres:.1f}"
            f"{extra} {rep.wall_s:.1f}s{flag}")


def _cmd_solve(args):
    spec, config, level = _solve_args(args)
    report, state = run_experiment(spec, config, level)
    write_report_csv([report], args.out)
    print(_summary(report))
    if args.vtk:
        for path in export_state_vtk(args.vtk, spec, state, level, args.vtk_time):
            log.info("wrote %s", path)
    return 0 if report.converged else 2


def _cmd_sweep(args):
    with open(args.config) as fh:
        runs, out = parse_sweep(fh.read())
    out = args.out or out
    if not out:
        raise ConfigError("sweep needs an output path (--out or out= in the config)")
    reports = []
    for spec, config, level in runs:
        report, _ = run_experiment(spec, config, level)
        reports.append(report)
        print(_summary(report), flush=True)
        write_report_csv(reports, out)
    write_report_csv(reports, out)
    return 0 if all(r.converged for r in reports) else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nscontrol", description="Preconditioned solvers for Navier-Stokes control.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one problem")
    s.add_argument("--problem", choices=[k for k in KINDS if k != "custom"])
    s.add_argument("--level", type=int)
    s.add_argument("--nu", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--scheme", choices=SCHEMES)
    s.add_argument("--tau", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--config", help="key=value file; command-line flags win")
    s.add_argument("--out", required=True, help="CSV report path")
    s.add_argument("--vtk", help="prefix for legacy VTK output")
    s.add_argument("--vtk-time", type=float, help="export only the slot nearest this time")
    s.set_defaults(func=_cmd_solve)

    w = sub.add_parser("sweep", help="run a level/nu/beta grid from a config file")
    w.add_argument("--config", required=True)
    w.add_argument("--out", help="CSV report path (overrides out= in the config)")
    w.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
