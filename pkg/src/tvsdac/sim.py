"""Fixed-step RK4 simulation of the closed loop, trajectory logs and parameter sweeps."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernel as _kernel
from .analysis import (
    compute_beta,
    compute_wd,
    initial_phi_norm_bound,
    lyapunov_value,
    residual_radius,
    v_envelope,
    z_transient_envelope,
)
from .controller import evaluate_signals, initialize_reference
from .errors import CompactSetExit, IntegrationError, MissingColumnError, TvsdacError

STEADY_FRACTION = 0.1


def rk4_step(f: Callable, y, t: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of y' = f(t, y)."""
    if not h > 0:
        raise ValueError("step size must be positive")
    y = np.asarray(y, dtype=float)
    hh = 0.5 * h
    k1 = _finite(f(t, y), t)
    k2 = _finite(f(t + hh, y + hh * k1), t)
    k3 = _finite(f(t + hh, y + hh * k2), t)
    k4 = _finite(f(t + h, y + h * k3), t)
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _finite(out, t + h)


def _finite(v, t):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise IntegrationError(t, "non-finite value in Runge-Kutta stage")
    return v


def integrate(f: Callable, y0, t0: float, h: float, nsteps: int) -> np.ndarray:
    """Array of nsteps+1 states from repeated :func:`rk4_step`."""
    ys = np.empty((nsteps + 1, np.size(y0)))
    ys[0] = y0
    for s in range(nsteps):
        ys[s + 1] = rk4_step(f, ys[s], t0 + s * h, h)
    return ys


@dataclass
class TrajectoryLog:
    columns: list
    data: np.ndarray
    meta: dict = field(default_factory=dict)
    states: Optional[np.ndarray] = None  # raw augmented ODE states, not written to CSV

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise MissingColumnError(f"log has no column {name!r}") from None

    def __len__(self) -> int:
        return self.data.shape[0]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.data:
                w.writerow([f"{x:.17g}" for x in row])

    @classmethod
    def read_csv(cls, path) -> "TrajectoryLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise MissingColumnError(f"{path} is empty")
        header = rows[0]
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise MissingColumnError(f"{path}: non-numeric entry ({exc})") from None
        data = data.reshape(-1, len(header))
        return cls(header, data)


def initial_thetas(scenario) -> list:
    return [[np.array(t, dtype=float) for t in row] for row in scenario.theta0]


def initial_state(scenario) -> np.ndarray:
    """Augmented state at t=0, solving the reference initial condition when requested."""
    system = scenario.system
    thetas = initial_thetas(scenario)
    xr0 = None
    if system.config.tracking:
        if scenario.reference_init == "trajectory":
            xr0 = initialize_reference(system, scenario.x0, thetas, scenario.xr_box)
        else:
            xr0 = scenario.xr0
    return system.pack_state(scenario.x0, thetas, xr0)


def run_closed_loop(scenario, backend: Optional[str] = None) -> TrajectoryLog:
    """Integrate the scenario over [0, T] and return the decimated log.

    Raises CompactSetExit, IntegrationError or a solver error on abort.
    """
    system = scenario.system
    h, nsteps, decim = scenario.h, scenario.nsteps, scenario.decimation
    y0 = initial_state(scenario)
    ts = np.arange(2 * nsteps + 1) * (0.5 * h)
    nu_table = np.moveaxis(system.nu(ts), -1, 0)
    if scenario.nu_box is not None:
        v = nu_table[:, :, 0]
        for s in range(v.shape[0]):
            bad = scenario.nu_box.first_violation(v[s])
            if bad is not None:
                raise CompactSetExit(ts[s], f"v{bad + 1}", float(v[s, bad]),
                                     (scenario.nu_box.lower[bad], scenario.nu_box.upper[bad]))
    ref = system.config.reference_input
    r_table = (ref.derivatives(ts, 1)[0] if ref is not None else np.zeros_like(ts))
    r_table = np.ascontiguousarray(r_table, dtype=float)

    if backend is None:
        backend = None if scenario.backend == "auto" else scenario.backend
    kern = _kernel.make_kernel(system, backend)
    steps, states, status, fail_step, detail = kern.integrate(
        y0, nu_table, r_table, h, nsteps, decim)
    if status:
        t_fail = fail_step * h
        y_fail = states[-1] if status != _kernel.ST_BOX else None
        if status == _kernel.ST_BOX:
            # rerun the failing step to report the offending value
            y_fail = _state_after(kern, states[-1], steps[-1], fail_step, nu_table, r_table, h)
        _kernel.raise_for_status(system, kern, status, t_fail, detail, y_fail)

    t = steps * h
    log = derive_log(scenario, t, states, nu_table[2 * steps], r_table[2 * steps])
    log.meta.update(backend=backend or _kernel.BACKEND, h=h, T=scenario.T, decimation=decim)
    return log


def _state_after(kern, y, step0, target, nu_table, r_table, h):
    y = np.array(y)
    for s in range(int(step0), int(target)):
        _, k1 = kern.rhs(y, nu_table[2 * s], r_table[2 * s])
        _, k2 = kern.rhs(y + 0.5 * h * k1, nu_table[2 * s + 1], r_table[2 * s + 1])
        _, k3 = kern.rhs(y + 0.5 * h * k2, nu_table[2 * s + 1], r_table[2 * s + 1])
        _, k4 = kern.rhs(y + h * k3, nu_table[2 * s + 2], r_table[2 * s + 2])
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def derive_log(scenario, t, states, nus, rs) -> TrajectoryLog:
    """Build the log columns from raw augmented states."""
    system = scenario.system
    n, R = system.n, system.plant.R
    rows = len(t)
    z = np.empty((rows, n))
    u = np.empty(rows)
    psi_c = np.empty((rows, n))
    for s in range(rows):
        sig = evaluate_signals(system, states[s], nus[s], rs[s])
        z[s] = sig.transform.z
        u[s] = sig.u
        for i in range(n):
            psi_c[s, i] = system.plant.composite(i, states[s, :n], sig.rho)[1]
    thetas = [[states[:, sl] for sl in row] for row in system.theta_slices]
    theta_norms = [[np.linalg.norm(th, axis=1) for th in row] for row in thetas]
    sum_z2 = np.sum(z * z, axis=1)

    cols = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"z{i + 1}" for i in range(n)]
    cols += ["u", "sum_z2"]
    data = [t[:, None], states[:, :n], z, u[:, None], sum_z2[:, None]]
    for i in range(n):
        for j in range(R):
            cols.append(f"theta_norm_{i + 1}_{j + 1}")
            data.append(theta_norms[i][j][:, None])
    meta = {}
    bounds = scenario.bounds
    if bounds is not None:
        W = compute_wd(bounds, system.config.k)
        beta = compute_beta(bounds)
        meta.update(W_d=W, beta_d=beta, residual=residual_radius(bounds, W, beta))
        gamma = [st.gamma for st in system.stages]
        if scenario.theta_star is not None:
            V = np.empty(rows)
            for s in range(rows):
                phi = [[thetas[i][j][s] - scenario.theta_star[i][j] for j in range(R)]
                       for i in range(n)]
                V[s] = lyapunov_value(z[s], phi, psi_c[s], gamma)
            v_env = v_envelope(t, V[0], W, beta)
            phi0 = [[np.linalg.norm(thetas[i][j][0] - scenario.theta_star[i][j])
                     for j in range(R)] for i in range(n)]
            z_env = z_transient_envelope(t, bounds, W, beta, phi0, gamma,
                                         float(np.sum(z[0] ** 2 / psi_c[0])))
            cols += ["V", "V_env", "z_env"]
            data += [V[:, None], v_env[:, None], z_env[:, None]]
        else:
            norms0 = [[theta_norms[i][j][0] for j in range(R)] for i in range(n)]
            z_env = z_transient_envelope(t, bounds, W, beta,
                                         initial_phi_norm_bound(norms0, bounds), gamma,
                                         float(np.sum(z[0] ** 2 / bounds.psi_lower)))
            cols.append("z_env")
            data.append(z_env[:, None])
    box = scenario.x_box
    inside = (np.ones(rows) if box is None else
              np.array([float(box.first_violation(x) is None) for x in states[:, :n]]))
    cols.append("in_compact")
    data.append(inside[:, None])
    return TrajectoryLog(cols, np.hstack(data), meta, states)


def steady_state(log: TrajectoryLog, fraction: float = STEADY_FRACTION) -> float:
    """Mean of sum z^2 over the final ``fraction`` of the horizon."""
    t = log.column("t")
    sz = log.column("sum_z2")
    start = t[-1] - fraction * (t[-1] - t[0])
    return float(np.mean(sz[t >= start - 1e-12 * max(1.0, abs(t[-1]))]))


SWEEP_PARAMS = ("k", "gamma", "sigma", "h")
SWEEP_COLUMNS = ["value", "steady_sum_z2", "max_sum_z2", "status", "error"]


def _sweep_one(scenario, param, value, backend):
    try:
        sc = scenario.with_param(param, value)
        log = run_closed_loop(sc, backend)
        return {"value": value, "steady_sum_z2": steady_state(log),
                "max_sum_z2": float(log.column("sum_z2").max()), "status": "ok", "error": "",
                "final_state": log.states[-1]}
    except TvsdacError as exc:
        return {"value": value, "steady_sum_z2": float("nan"), "max_sum_z2": float("nan"),
                "status": "failed", "error": str(exc), "final_state": None}


def sweep_threads() -> int:
    env = os.environ.get("TVSDAC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


def sweep(scenario, parameter: str, values: Sequence[float], threads: Optional[int] = None,
          backend: Optional[str] = None) -> list[dict]:
    """One run per value; failures become rows with status ``failed``."""
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"parameter must be one of {SWEEP_PARAMS}")
    threads = sweep_threads() if threads is None else max(1, threads)
    if threads == 1 or len(values) == 1:
        return [_sweep_one(scenario, parameter, v, backend) for v in values]
    with ThreadPoolExecutor(max_workers=min(threads, len(values))) as pool:
        return list(pool.map(lambda v: _sweep_one(scenario, parameter, v, backend), values))


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([f"{r['value']:.17g}", f"{r['steady_sum_z2']:.17g}",
                        f"{r['max_sum_z2']:.17g}", r["status"], r["error"]])
