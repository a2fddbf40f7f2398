"""Direct adaptive backstepping control law for interpolated strict-feedback plants.

State transformation (z_0 = 0)::

    z_1 = x_1              (regulation)      z_1 = x_1 - xr_1    (tracking)
    z_i = x_i - alpha_hat_{i-1} - alpha_s_{i-1}
    alpha_s_i = -k_i z_i - z_{i-1}
    u = alpha_hat_n + alpha_s_n
    theta_ij' = -rho_j gamma_ij zeta_ij z_i - sigma_ij theta_ij

Approximator inputs are named signals:

``x<k>``         plant state coordinate
``v<m>``         scheduling component m (same as ``v<m>_d0``)
``v<m>_d<o>``    o-th time derivative of scheduling component m
``xr<k>``        reference model state (tracking mode)
``fr``           reference model acceleration f_r(X_r, r) (tracking mode)
``eta<k>``       c_k z_k (only with ``eta`` enabled)

The closed-loop ODE state is laid out as ``[X, theta_11, ..., theta_1R,
theta_21, ..., theta_nR, X_r]`` with X_r present only in tracking mode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import exprlang
from .approx import StageApproximator, solve_reference_init
from .errors import ExprEvalError, ScenarioError, StructureError
from .plant import (
    CompactBox,
    PlantModel,
    SchedulingSignal,
    SignalFamily,
    eval_interpolation,
    plant_derivative_rho,
    scheduling_matrix,
)

REGULATION = "regulation"
TRACKING = "tracking"

_SIGNAL_RE = re.compile(r"^(?:x(\d+)|v(\d+)(?:_d(\d+))?|xr(\d+)|fr|eta(\d+))$")


@dataclass(frozen=True)
class SignalLayout:
    """Positions of the named approximator inputs inside one flat signal vector."""

    n: int
    q: int

    @property
    def nu_offset(self) -> int:
        return self.n

    @property
    def xr_offset(self) -> int:
        return self.n + self.q * self.n

    @property
    def fr_offset(self) -> int:
        return self.xr_offset + self.n

    @property
    def eta_offset(self) -> int:
        return self.fr_offset + 1

    @property
    def size(self) -> int:
        return self.eta_offset + self.n

    def index(self, name: str) -> int:
        m = _SIGNAL_RE.match(name)
        if m is None:
            raise StructureError(f"unknown approximator input {name!r}")
        x, v, o, xr, eta = m.groups()
        if x is not None:
            k = int(x)
            self._range(name, k, self.n)
            return k - 1
        if v is not None:
            comp = int(v)
            order = int(o) if o is not None else 0
            self._range(name, comp, self.q)
            if order >= self.n:
                raise StructureError(f"{name}: derivative order must be below n={self.n}")
            return self.nu_offset + order * self.q + comp - 1
        if xr is not None:
            k = int(xr)
            self._range(name, k, self.n)
            return self.xr_offset + k - 1
        if eta is not None:
            k = int(eta)
            self._range(name, k, self.n)
            return self.eta_offset + k - 1
        return self.fr_offset

    @staticmethod
    def _range(name, k, top):
        if not 1 <= k <= top:
            raise StructureError(f"{name}: index must be in 1..{top}")


def default_inputs(stage: int, n: int, q: int, mode: str = REGULATION,
                   eta: bool = False) -> tuple[str, ...]:
    """(X_i, flattened nu_i), plus xr_{i+1} when tracking and eta_i when enabled."""
    names = [f"x{k}" for k in range(1, stage + 1)]
    for o in range(stage):
        for m in range(1, q + 1):
            names.append(f"v{m}" if o == 0 else f"v{m}_d{o}")
    if mode == TRACKING and stage < n:
        names.append(f"xr{stage + 1}")
    if eta:
        names.append(f"eta{stage}")
    return tuple(names)


def validate_inputs(names: Sequence[str], stage: int, n: int, q: int, mode: str,
                    eta: bool) -> None:
    """Causality and mode checks for one stage's input list (1-based ``stage``)."""
    for name in names:
        m = _SIGNAL_RE.match(name)
        if m is None:
            raise StructureError(f"stage {stage}: unknown input {name!r}")
        x, v, o, xr, e = m.groups()
        if x is not None and int(x) > stage:
            raise StructureError(f"stage {stage}: input {name} is not available before stage {x}")
        if v is not None and o is not None and int(o) > stage - 1:
            raise StructureError(
                f"stage {stage}: {name} exceeds the derivative order {stage - 1} in nu_{stage}")
        if (xr is not None or name == "fr") and mode != TRACKING:
            raise StructureError(f"stage {stage}: {name} requires tracking mode")
        if e is not None:
            if not eta:
                raise StructureError(f"stage {stage}: {name} requires eta inputs to be enabled")
            if int(e) > stage:
                raise StructureError(f"stage {stage}: {name} is not available yet")
        SignalLayout(n, q).index(name)


@dataclass
class ControllerConfig:
    n: int
    k: np.ndarray
    mode: str = REGULATION
    c: Optional[np.ndarray] = None
    eta: bool = False
    f_r: Optional[exprlang.Expr] = None
    reference_input: Optional[SignalFamily] = None

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float).reshape(-1)
        if self.k.size != self.n:
            raise StructureError(f"need n={self.n} gains k_i, got {self.k.size}")
        if np.any(self.k <= 0):
            raise StructureError("gains k_i must be positive")
        if self.mode not in (REGULATION, TRACKING):
            raise StructureError(f"unknown mode {self.mode!r}")
        if self.c is not None:
            self.c = np.asarray(self.c, dtype=float).reshape(-1)
            if self.c.size != self.n:
                raise StructureError(f"need n={self.n} constants c_i, got {self.c.size}")
        if self.eta and self.c is None:
            raise StructureError("eta inputs need the constants c_i")
        if self.mode == TRACKING:
            if self.f_r is None:
                raise StructureError("tracking mode needs a reference model f_r")
            allowed = {f"xr{k}" for k in range(1, self.n + 1)} | {"r"}
            extra = exprlang.free_vars(self.f_r) - allowed
            if extra:
                raise StructureError(f"f_r may only use {sorted(allowed)}; found {sorted(extra)}")

    @property
    def tracking(self) -> bool:
        return self.mode == TRACKING


@dataclass
class ClosedLoopSystem:
    """Everything the closed-loop derivative depends on."""

    plant: PlantModel
    signal: SchedulingSignal
    config: ControllerConfig
    stages: list[StageApproximator]
    box: Optional[CompactBox] = None
    layout: SignalLayout = field(init=False)
    input_index: list[np.ndarray] = field(init=False)
    theta_slices: list[list[slice]] = field(init=False)

    def __post_init__(self):
        n, q = self.plant.n, self.plant.q
        if self.config.n != n:
            raise StructureError("controller and plant disagree on n")
        if len(self.stages) != n:
            raise StructureError(f"need one approximator per stage ({n}), got {len(self.stages)}")
        if self.signal.q != q:
            raise StructureError(f"scheduling signal has {self.signal.q} components, plant q={q}")
        for i, st in enumerate(self.stages):
            if st.R != self.plant.R:
                raise StructureError(f"stage {i + 1}: approximator has {st.R} pieces, plant R={self.plant.R}")
            validate_inputs(st.inputs, i + 1, n, q, self.config.mode, self.config.eta)
        self.layout = SignalLayout(n, q)
        self.input_index = [np.array([self.layout.index(s) for s in st.inputs], dtype=np.intp)
                            for st in self.stages]
        slices = []
        pos = n
        for st in self.stages:
            row = []
            for N in st.sizes:
                row.append(slice(pos, pos + N))
                pos += N
            slices.append(row)
        self.theta_slices = slices
        self._dim = pos + (n if self.config.tracking else 0)

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def xr_slice(self) -> slice:
        return slice(self.dim - self.n, self.dim)

    def thetas(self, y) -> list[list[np.ndarray]]:
        return [[y[s] for s in row] for row in self.theta_slices]

    def pack_state(self, X, thetas, X_r=None) -> np.ndarray:
        parts = [np.asarray(X, dtype=float)]
        for row in thetas:
            parts.extend(np.asarray(t, dtype=float) for t in row)
        if self.config.tracking:
            parts.append(np.asarray(X_r, dtype=float))
        y = np.concatenate(parts)
        if y.size != self.dim:
            raise StructureError(f"state has {y.size} entries, expected {self.dim}")
        return y

    def nu(self, t) -> np.ndarray:
        return scheduling_matrix(self.signal, t, self.n)

    def r(self, t) -> float:
        ref = self.config.reference_input
        if ref is None:
            return 0.0
        return float(ref.derivatives(t, 1)[0])


class Transform(NamedTuple):
    z: np.ndarray
    alpha_hat: np.ndarray
    alpha_s: np.ndarray
    zeta: list  # zeta[i][j]
    signals: np.ndarray


def build_signals(layout: SignalLayout, X, nu, X_r=None, fr: float = 0.0) -> np.ndarray:
    """Flat signal vector with the eta block left at zero."""
    sig = np.zeros(layout.size)
    sig[: layout.n] = X
    # nu is (q, n); stored derivative-order major
    sig[layout.nu_offset: layout.xr_offset] = np.asarray(nu, dtype=float).T.reshape(-1)
    if X_r is not None:
        sig[layout.xr_offset: layout.fr_offset] = X_r
    sig[layout.fr_offset] = fr
    return sig


def transform_states(cfg: ControllerConfig, stages: Sequence[StageApproximator], rho,
                     signals: np.ndarray, input_index: Sequence[np.ndarray], layout: SignalLayout,
                     thetas=None) -> Transform:
    """Recursive diffeomorphism X -> z, with approximator and stabilizing terms per stage.

    ``signals`` comes from :func:`build_signals`; its eta block is filled in
    place as the z_i become available.
    """
    n = cfg.n
    X = signals[:n]
    z = np.empty(n)
    ahat = np.empty(n)
    a_s = np.empty(n)
    zetas = []
    for i in range(n):
        if i == 0:
            z[0] = X[0] - signals[layout.xr_offset] if cfg.tracking else X[0]
        else:
            z[i] = X[i] - ahat[i - 1] - a_s[i - 1]
        if cfg.eta:
            signals[layout.eta_offset + i] = cfg.c[i] * z[i]
        st = stages[i]
        x_in = signals[input_index[i]]
        zeta = st.basis(x_in)
        th = st.theta if thetas is None else thetas[i]
        total = 0.0
        for j in range(st.R):
            total += rho[j] * float(th[j] @ zeta[j])
        ahat[i] = total
        a_s[i] = -cfg.k[i] * z[i] - (z[i - 1] if i > 0 else 0.0)
        zetas.append(zeta)
    return Transform(z, ahat, a_s, zetas, signals)


def control_input(cfg: ControllerConfig, z, alpha_hat_n: float) -> float:
    """u = alpha_hat_n - k_n z_n - z_{n-1}."""
    n = cfg.n
    prev = z[n - 2] if n > 1 else 0.0
    return alpha_hat_n + (-cfg.k[n - 1] * z[n - 1] - prev)


def adaptation_derivatives(stages: Sequence[StageApproximator], rho, zeta, z, thetas=None):
    """theta_ij' = -rho_j gamma_ij zeta_ij z_i - sigma_ij theta_ij, as nested lists."""
    out = []
    for i, st in enumerate(stages):
        th = st.theta if thetas is None else thetas[i]
        row = []
        for j in range(st.R):
            row.append(-rho[j] * st.gamma[j] * z[i] * zeta[i][j] - st.sigma[j] * th[j])
        out.append(row)
    return out


def reference_derivative(cfg: ControllerConfig, X_r, r_t: float) -> np.ndarray:
    """Integrator chain xr_i' = xr_{i+1}, xr_n' = f_r(X_r, r)."""
    X_r = np.asarray(X_r, dtype=float)
    d = np.empty(cfg.n)
    d[:-1] = X_r[1:]
    d[-1] = reference_acceleration(cfg, X_r, r_t)
    return d


def reference_acceleration(cfg: ControllerConfig, X_r, r_t: float) -> float:
    env = {f"xr{k + 1}": float(X_r[k]) for k in range(cfg.n)}
    env["r"] = float(r_t)
    try:
        return exprlang.evaluate(cfg.f_r, env)
    except ExprEvalError as exc:
        raise ExprEvalError(f"reference model f_r: {exc}") from exc


def eta_inputs(cfg: ControllerConfig, z) -> np.ndarray:
    """eta_i = c_i z_i."""
    if cfg.c is None:
        raise StructureError("eta inputs need the constants c_i")
    return cfg.c * np.asarray(z, dtype=float)


class Signals(NamedTuple):
    """Derived closed-loop quantities at one instant."""

    rho: np.ndarray
    transform: Transform
    u: float
    fr: float


def evaluate_signals(system: ClosedLoopSystem, y, nu, r: float) -> Signals:
    cfg = system.config
    n = system.n
    rho = eval_interpolation(system.plant, np.asarray(nu)[:, 0])
    X = y[:n]
    X_r = y[system.xr_slice] if cfg.tracking else None
    fr = reference_acceleration(cfg, X_r, r) if cfg.tracking else 0.0
    sig = build_signals(system.layout, X, nu, X_r, fr)
    tr = transform_states(cfg, system.stages, rho, sig, system.input_index, system.layout,
                          system.thetas(y))
    u = control_input(cfg, tr.z, tr.alpha_hat[n - 1])
    return Signals(rho, tr, u, fr)


def closed_loop_rhs(system: ClosedLoopSystem, y, nu, r: float) -> np.ndarray:
    """Derivative of the augmented state for given scheduling matrix ``nu`` and input ``r``."""
    y = np.asarray(y, dtype=float)
    s = evaluate_signals(system, y, nu, r)
    n = system.n
    dy = np.empty_like(y)
    dy[:n] = plant_derivative_rho(system.plant, y[:n], s.u, s.rho)
    dth = adaptation_derivatives(system.stages, s.rho, s.transform.zeta, s.transform.z,
                                 system.thetas(y))
    for row_s, row_d in zip(system.theta_slices, dth):
        for sl, d in zip(row_s, row_d):
            dy[sl] = d
    if system.config.tracking:
        X_r = y[system.xr_slice]
        dy[system.xr_slice][:-1] = X_r[1:]
        dy[system.dim - 1] = s.fr
    return dy


def closed_loop_derivative(system: ClosedLoopSystem, t: float, y) -> np.ndarray:
    """Pure function of (t, y): plant, adaptation and reference dynamics concatenated."""
    return closed_loop_rhs(system, y, system.nu(t), system.r(t))


def initialize_reference(system: ClosedLoopSystem, X0, thetas, xr_box: CompactBox,
                         t0: float = 0.0) -> np.ndarray:
    """Choose X_r(0) so that z_i(0) = 0 for every stage.

    x_r1(0) = x_1(0); then stage by stage x_r,i+1(0) solves
    alpha_hat_i(..., x_r,i+1) = x_{i+1}(0) - alpha_s_i(0).
    """
    cfg = system.config
    if not cfg.tracking:
        raise ScenarioError("controller.mode", "trajectory initialization needs tracking mode")
    n = system.n
    X0 = np.asarray(X0, dtype=float)
    nu = system.nu(t0)
    r0 = system.r(t0)
    rho = eval_interpolation(system.plant, nu[:, 0])
    X_r = np.array(xr_box.lower + xr_box.upper) / 2.0
    X_r[0] = X0[0]
    for i in range(n - 1):
        name = f"xr{i + 2}"
        if name not in system.stages[i].inputs:
            raise ScenarioError(
                f"approximators[{i}].inputs",
                f"trajectory initialization needs {name} as an input of stage {i + 1}")
        fr = reference_acceleration(cfg, X_r, r0)
        sig = build_signals(system.layout, X0, nu, X_r, fr)
        tr = transform_states(cfg, system.stages, rho, sig, system.input_index, system.layout,
                              thetas)
        unknown = system.stages[i].inputs.index(name)
        target = X0[i + 1] - tr.alpha_s[i]
        x_in = tr.signals[system.input_index[i]]
        X_r[i + 1] = solve_reference_init(
            system.stages[i], rho, x_in, target,
            (xr_box.lower[i + 1], xr_box.upper[i + 1]), unknown, thetas[i])
    return X_r
