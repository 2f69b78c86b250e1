"""``westervelt`` command line.

Exit codes: 0 success, 1 usage or config error, 2 solver error, 3 IO error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from . import io as wio
from .errors import ConfigError, FitUnreliable, SolverError, WesterveltError
from .experiments import (
    COMP_TOL,
    compatibility_residual,
    enforce_compatibility,
    fit_equilibrium_convergence,
    make_initial_data,
    mms_convergence_study,
    reflection_experiment,
)
from .grid import build_grid
from .linear import assemble_A0, kernel_and_semisimplicity, spectral_gap, spectrum, zero_cluster
from .model import PhysicalParams
from .stepper import BOUNDARY_VARIANTS, SCHEMES, StepperConfig, WesterveltSystem

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _out_dir(arg: str | None, default: str = "out") -> str:
    return os.environ.get(wio.OUT_ENV) or arg or default


class _Run:
    """Owns the output directory and the report file once it is opened."""

    def __init__(self, out_dir: str, command: str):
        self.out_dir = out_dir
        self.command = command
        self.report_path = None
        self.summary = {"command": command, "version": __version__}

    def open(self):
        os.makedirs(self.out_dir, exist_ok=True)
        self.report_path = os.path.join(self.out_dir, "report.txt")
        wio.write_report({**self.summary, "status": "running"}, self.report_path)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def finish(self, **fields):
        self.summary.update(fields)
        self.summary["status"] = "ok"
        wio.write_report(self.summary, self.report_path)

    def fail(self, exc: Exception, code: int):
        if self.report_path is None:
            return
        record = {**self.summary, "status": "error", "exit_code": code,
                  "error_type": type(exc).__name__, "error_message": str(exc)}
        t = getattr(exc, "t", None)
        if t is not None:
            record["error_time"] = float(t)
        try:
            wio.write_report(record, self.report_path)
        except OSError:
            pass


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _setup_from_config(cfg: wio.RunConfig):
    grid = build_grid(cfg.grid.dim, cfg.grid.extents, cfg.grid.n)
    data = make_initial_data(cfg.recipe, grid, cfg.physics, **cfg.initial_params)
    return grid, data


def cmd_simulate(args, run: _Run):
    cfg = wio.load_config(args.config)
    run.out_dir = _out_dir(args.out, cfg.output)
    run.open()
    run.summary.update(kind=cfg.kind, recipe=cfg.recipe, t_end=cfg.t_end, dt=cfg.stepper.dt,
                       scheme=cfg.stepper.scheme, boundary=cfg.boundary, seed=cfg.seed)
    grid, data = _setup_from_config(cfg)
    system = WesterveltSystem(grid, cfg.physics, boundary=cfg.boundary)
    u_start = np.array(data.u0)
    try:
        report = system.simulate(data.state(), cfg.t_end, cfg.stepper, keep_states=True)
    except SolverError as exc:
        if exc.report is not None:
            wio.write_series(exc.report.series, run.path("series.csv"))
        raise
    wio.write_series(report.series, run.path("series.csv"))
    final = report.states[-1]
    fields = {
        "steps": len(report) - 1,
        "drift_u": float(np.max(np.abs(final.u - u_start))),
        "final_sup_v": float(np.max(np.abs(final.v))),
        "final_mean_u": grid.mean(final.u),
        "max_abs_u": float(np.max(report.column("max_abs_u"))),
        "max_bc_residual": float(np.max(report.column("bc_residual"))),
    }
    try:
        fit = fit_equilibrium_convergence(report, grid, cfg.physics)
        fields.update(fit_status="ok", r_inf=fit.r_inf, omega=fit.omega, fit_residual=fit.fit_residual)
    except FitUnreliable as exc:
        fields.update(fit_status="unreliable", fit_message=str(exc))
    run.finish(**fields)
    return EXIT_OK


def cmd_spectrum(args, run: _Run):
    params = PhysicalParams(args.c, args.beta, args.gamma)
    extents = [(0.0, 1.0)] * args.dim
    grid = build_grid(args.dim, extents, args.n)
    run.open()
    op = assemble_A0(args.r, grid, params)
    lam = spectrum(op)
    mask = zero_cluster(op, lam)
    wio.write_spectrum(lam, mask, run.path("spectrum.csv"))
    kr = kernel_and_semisimplicity(op, lam)
    run.finish(r=args.r, n=args.n, dim=args.dim, c=params.c, beta=params.beta, gamma=params.gamma,
               c_r=op.cr, size=len(lam), zero_cluster_count=int(mask.sum()),
               spectral_gap=spectral_gap(op, lam), kernel_dim=kr.kernel_dim,
               semisimple=kr.semisimple, jordan_residual=kr.jordan_residual)
    return EXIT_OK


def cmd_reflection(args, run: _Run):
    params = PhysicalParams(args.c, args.beta, args.gamma)
    run.open()
    res = reflection_experiment(params, args.variant, amplitude=args.amplitude, n=args.n,
                                dt=args.dt, scheme=args.scheme)
    _write_probe(res, run.path("probe.csv"))
    run.finish(variant=args.variant, incident_amp=res.incident_amp,
               reflected_amp=res.reflected_amp, ratio=res.ratio, probe_x=res.probe_x,
               t_split=res.t_split)
    return EXIT_OK


def _write_probe(res, path):
    rows = ["t,abs_u_probe"] + [f"{wio.fmt(t)},{wio.fmt(s)}" for t, s in zip(res.times, res.probe_signal)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def cmd_compat_check(args, run: _Run):
    cfg = wio.load_config(args.config)
    run.out_dir = _out_dir(args.out, cfg.output)
    run.open()
    grid, data = _setup_from_config(cfg)
    res = compatibility_residual(data, cfg.physics, grid)
    worst = float(np.max(np.abs(res)))
    fields = {"recipe": cfg.recipe, "max_residual": worst, "tolerance": COMP_TOL,
              "compatible": worst < COMP_TOL}
    if args.enforce:
        fixed = enforce_compatibility(data, cfg.physics, grid)
        fields.update(
            enforced_max_residual=float(np.max(np.abs(compatibility_residual(fixed, cfg.physics, grid)))),
            correction_norm=fixed.provenance["compat_correction_norm"],
            correction_condition=fixed.provenance["compat_condition"],
        )
    run.finish(**fields)
    return EXIT_OK


def cmd_mms(args, run: _Run):
    params = PhysicalParams(args.c, args.beta, args.gamma)
    run.open()
    cfg = StepperConfig(dt=args.dt, scheme=args.scheme)
    if args.kind == "space":
        res_list = [int(x) for x in args.resolutions]
    else:
        res_list = [float(x) for x in args.resolutions]
    result = mms_convergence_study(args.recipe, res_list, cfg, params, kind=args.kind,
                                   t_end=args.t_end, n=args.n, dim=args.dim, eps=args.eps)
    fields = {"recipe": args.recipe, "kind": args.kind, "scheme": args.scheme}
    for i, (h, e) in enumerate(zip(result.resolutions, result.errors)):
        fields[f"resolution_{i}"] = h
        fields[f"error_{i}"] = e
    for i, o in enumerate(result.orders):
        fields[f"order_{i}"] = o
    for i, o in enumerate(result.triplet_orders):
        fields[f"triplet_order_{i}"] = o
    run.finish(**fields)
    return EXIT_OK


def cmd_version(args, run):
    print(__version__)
    return EXIT_OK


def _resolution(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="westervelt", description="Westervelt equation with absorbing boundary: simulation and analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def physics(p, beta=1.0):
        p.add_argument("--c", type=float, default=1.0, help="sound speed")
        p.add_argument("--beta", type=float, default=beta, help="diffusivity")
        p.add_argument("--gamma", type=float, default=0.5, help="nonlinearity (>= 0)")

    p = sub.add_parser("simulate", help="run a configured simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides [run] output)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spectrum", help="eigenvalues of the linearization at (r, 0)")
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--n", type=int, default=32, help="nodes per axis")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    physics(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("reflection", help="1D pulse reflection off the right wall")
    p.add_argument("--variant", choices=BOUNDARY_VARIANTS, default="abc")
    p.add_argument("--amplitude", type=float, default=0.01)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--scheme", choices=SCHEMES, default="tr-bdf2")
    physics(p, beta=0.01)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reflection)

    p = sub.add_parser("compat-check", help="boundary compatibility of the configured initial data")
    p.add_argument("--config", required=True)
    p.add_argument("--enforce", action="store_true", help="also report the collar correction")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compat_check)

    p = sub.add_parser("mms", help="manufactured-solution convergence study")
    p.add_argument("--recipe", choices=("cos-exp", "sin-exp"), default="sin-exp")
    p.add_argument("--kind", choices=("space", "time"), default="space")
    p.add_argument("--resolutions", nargs="+", type=_resolution, default=[33, 65, 129],
                   help="node counts (space) or time steps (time)")
    p.add_argument("--dt", type=float, default=0.01, help="time step for a space study")
    p.add_argument("--n", type=int, default=65, help="nodes for a time study")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--t-end", dest="t_end", type=float, default=0.5)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--scheme", choices=SCHEMES, default="tr-bdf2")
    physics(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mms)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=cmd_version)
    return parser


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    run = _Run(_out_dir(getattr(args, "out", None)), args.command)
    try:
        return args.func(args, run)
    except (ConfigError, SolverError, OSError, WesterveltError) as err:
        exc = err
    if isinstance(exc, ConfigError):
        code = EXIT_USAGE
    elif isinstance(exc, OSError):
        code = EXIT_IO
    else:
        # solver errors, and analysis failures such as an ambiguous probe
        code = EXIT_SOLVER
    print(f"westervelt {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    try:
        run.fail(exc, code)
    except OSError:
        pass
    return code


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
