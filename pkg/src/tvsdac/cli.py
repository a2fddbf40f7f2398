"""Command-line front end.

Exit codes: 0 success, 1 failed check, 2 invalid scenario or input,
3 runtime abort (compact-set exit, non-finite state, solver failure).
Every error prints one line starting with ``error:`` on stderr.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis, sim, svgplot
from .controller import evaluate_signals
from .errors import (
    CompactSetExit,
    DerivativeDegenerateError,
    IntegrationError,
    NoRootError,
    SingularGainError,
    TvsdacError,
)
from .scenario import load_scenario

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
_RUNTIME = (CompactSetExit, IntegrationError, DerivativeDegenerateError, NoRootError,
            SingularGainError)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _require_bounds(sc):
    if sc.bounds is None:
        raise CliError(EXIT_INVALID, "bounds: scenario has no bound set")
    return sc.bounds


def initial_envelope(sc, y0) -> float:
    """Transient bound on sum z^2 at t=0 for the scenario's initial state."""
    bounds = _require_bounds(sc)
    system = sc.system
    n, R = system.n, system.plant.R
    W = analysis.compute_wd(bounds, sc.k)
    beta = analysis.compute_beta(bounds)
    sig = evaluate_signals(system, y0, system.nu(0.0), system.r(0.0))
    z = sig.transform.z
    thetas = system.thetas(y0)
    gamma = [st.gamma for st in system.stages]
    if sc.theta_star is not None:
        phi0 = [[np.linalg.norm(thetas[i][j] - sc.theta_star[i][j]) for j in range(R)]
                for i in range(n)]
        psi_c = np.array([system.plant.composite(i, y0[:n], sig.rho)[1] for i in range(n)])
    else:
        norms = [[np.linalg.norm(thetas[i][j]) for j in range(R)] for i in range(n)]
        phi0 = analysis.initial_phi_norm_bound(norms, bounds)
        psi_c = bounds.psi_lower
    z0 = float(np.sum(z**2 / psi_c))
    return float(analysis.z_transient_envelope(0.0, bounds, W, beta, phi0, gamma, z0))


def cmd_simulate(args) -> int:
    sc = load_scenario(args.config)
    log = sim.run_closed_loop(sc, args.backend)
    log.write_csv(args.out)
    if args.svg:
        with open(args.svg, "w") as fh:
            fh.write(svgplot.trajectory_svg(log))
    print(f"wrote {len(log)} rows to {args.out} (backend={log.meta['backend']})")
    return EXIT_OK


def cmd_bounds(args) -> int:
    sc = load_scenario(args.config)
    bounds = _require_bounds(sc)
    W = analysis.compute_wd(bounds, sc.k)
    beta = analysis.compute_beta(bounds)
    radius = analysis.residual_radius(bounds, W, beta)
    env0 = initial_envelope(sc, sim.initial_state(sc))
    print(f"W_d={_fmt(W)} beta_d={_fmt(beta)} residual={_fmt(radius)} z_env0={_fmt(env0)}")
    return EXIT_OK


def cmd_init(args) -> int:
    sc = load_scenario(args.config)
    system = sc.system
    if not system.config.tracking:
        raise CliError(EXIT_INVALID, "controller.mode: init needs a tracking scenario")
    y0 = sim.initial_state(sc)
    xr = y0[system.xr_slice]
    z = evaluate_signals(system, y0, system.nu(0.0), system.r(0.0)).transform.z
    print(" ".join(f"xr{i + 1}={x:.17g}" for i, x in enumerate(xr)))
    print(f"max_abs_z0={float(np.max(np.abs(z))):.17g}")
    return EXIT_OK


def _values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(EXIT_INVALID, f"--values: cannot parse {text!r} as numbers") from None
    if not vals:
        raise CliError(EXIT_INVALID, "--values: no values given")
    return vals


def cmd_sweep(args) -> int:
    sc = load_scenario(args.config)
    if args.param not in sim.SWEEP_PARAMS:
        raise CliError(EXIT_INVALID, f"--param must be one of {', '.join(sim.SWEEP_PARAMS)}")
    rows = sim.sweep(sc, args.param, _values(args.values), args.threads, args.backend)
    sim.write_sweep_csv(rows, args.out)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"wrote {len(rows)} rows to {args.out} ({failed} failed)")
    return EXIT_OK


def cmd_check(args) -> int:
    sc = load_scenario(args.config)
    bounds = _require_bounds(sc)
    try:
        log = sim.TrajectoryLog.read_csv(args.log)
    except OSError as exc:
        raise CliError(EXIT_INVALID, f"{args.log}: {exc.strerror}") from None
    tol = analysis.Tolerances(rel=args.rel, dv_rel=args.rel)
    report = analysis.check_trajectory(log, bounds, sc.k, tol)
    if args.out:
        report.write_csv(args.out)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


class _Parser(argparse.ArgumentParser):
    # usage errors become one-line diagnostics like every other failure
    def error(self, message):
        raise CliError(EXIT_INVALID, f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tvsdac", description=(
        "Adaptive backstepping for plants with time-varying structure: "
        "simulation, bound formulas and trajectory checks."))
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate a scenario and write the trajectory CSV")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--svg")
    s.add_argument("--backend", choices=["cython", "python"])
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bounds", help="print W_d, beta_d, residual radius and z envelope at t=0")
    s.add_argument("config")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("init", help="solve the reference initial condition (tracking)")
    s.add_argument("config")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("sweep", help="steady-state residual over a design parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated list")
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int)
    s.add_argument("--backend", choices=["cython", "python"])
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("check", help="compare a logged trajectory with the bounds")
    s.add_argument("log")
    s.add_argument("config")
    s.add_argument("--out", help="per-sample margin CSV")
    s.add_argument("--rel", type=float, default=0.05, help="relative slack (default 0.05)")
    s.set_defaults(func=cmd_check)
    return p


def _one_line(msg: str) -> str:
    return " ".join(str(msg).split())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except _RUNTIME as exc:
        code, msg = EXIT_RUNTIME, str(exc)
    except TvsdacError as exc:
        code, msg = EXIT_INVALID, str(exc)
    except OSError as exc:
        code, msg = EXIT_RUNTIME, f"{exc.filename}: {exc.strerror}"
    print(f"error: {_one_line(msg)}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
