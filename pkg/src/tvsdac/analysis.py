"""Bound formulas of the adaptive backstepping design and numerical checks against logs.

Definitions (stage i, piece j)::

    cbar_i   = c_i - psi_rate_i / (2 psi_lower_i)       cbar_0 = min cbar_i
    psi_lo_m = min psi_lower_i    psi_hi_m = max psi_upper_i    psi_m = psi_lo_m / psi_hi_m
    sigma_0  = min sigma_ij
    W_d      = sum d_i^2 / (4 k_i) + 1/2 sum sigma_ij |theta*_ij|^2 / gamma_ij
    beta_d   = min(2 cbar_0 psi_m, sigma_0)
    V        = 1/2 sum z_i^2 / psi_i^c + 1/2 sum |theta_hat_ij - theta*_ij|^2 / gamma_ij
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidDesignError, MissingColumnError, StructureError


def _nested(values, n: int, name: str) -> list[np.ndarray]:
    rows = [np.atleast_1d(np.asarray(r, dtype=float)) for r in values]
    if len(rows) != n:
        raise StructureError(f"{name}: expected {n} stages, got {len(rows)}")
    return rows


@dataclass
class BoundSet:
    """Constants entering the stability bounds, one entry per stage (``[i][j]`` for pieces)."""

    psi_lower: np.ndarray
    psi_upper: np.ndarray
    psi_rate: np.ndarray
    d_alpha: np.ndarray
    theta_star_norms: list
    c: np.ndarray
    sigma: list = field(default_factory=list)
    gamma: list = field(default_factory=list)

    def __post_init__(self):
        self.psi_lower = np.asarray(self.psi_lower, dtype=float).reshape(-1)
        n = self.psi_lower.size
        self.psi_upper = np.asarray(self.psi_upper, dtype=float).reshape(-1)
        self.psi_rate = np.broadcast_to(np.asarray(self.psi_rate, dtype=float), (n,)).copy()
        self.d_alpha = np.broadcast_to(np.asarray(self.d_alpha, dtype=float), (n,)).copy()
        self.c = np.broadcast_to(np.asarray(self.c, dtype=float), (n,)).copy()
        self.theta_star_norms = _nested(self.theta_star_norms, n, "theta_star_norms")
        if self.sigma:
            self.sigma = _nested(self.sigma, n, "sigma")
        if self.gamma:
            self.gamma = _nested(self.gamma, n, "gamma")
        if self.psi_upper.size != n:
            raise StructureError("psi_lower and psi_upper need one entry per stage")
        if np.any(self.psi_lower <= 0) or np.any(self.psi_upper < self.psi_lower):
            raise InvalidDesignError("need 0 < psi_lower_i <= psi_upper_i for every stage")
        if np.any(self.d_alpha < 0):
            raise InvalidDesignError("representation error bounds d_alpha must be >= 0")
        if np.any(self.psi_rate < 0):
            raise InvalidDesignError("psi_rate bounds must be >= 0")
        if np.any(self.c_bar <= 0):
            bad = int(np.flatnonzero(self.c_bar <= 0)[0])
            raise InvalidDesignError(
                f"cbar_{bad + 1} = {self.c_bar[bad]!r} <= 0; increase c_{bad + 1}")

    @property
    def n(self) -> int:
        return self.psi_lower.size

    @property
    def c_bar(self) -> np.ndarray:
        return self.c - self.psi_rate / (2.0 * self.psi_lower)

    @property
    def c_bar0(self) -> float:
        return float(self.c_bar.min())

    @property
    def psi_lower_m(self) -> float:
        return float(self.psi_lower.min())

    @property
    def psi_upper_m(self) -> float:
        return float(self.psi_upper.max())

    @property
    def psi_m(self) -> float:
        return self.psi_lower_m / self.psi_upper_m

    @property
    def sigma0(self) -> float:
        if not self.sigma:
            raise InvalidDesignError("sigma_0 needs the leakage gains of every approximator")
        return float(min(s.min() for s in self.sigma))

    def to_dict(self) -> dict:
        return {"psi_lower": self.psi_lower.tolist(), "psi_upper": self.psi_upper.tolist(),
                "psi_rate": self.psi_rate.tolist(), "d_alpha": self.d_alpha.tolist(),
                "theta_star_norms": [t.tolist() for t in self.theta_star_norms],
                "c": self.c.tolist()}


def wd_terms(bounds: BoundSet, k, sigma=None, gamma=None) -> tuple[float, float]:
    """(representation-error part, parameter part) of W_d."""
    k = np.asarray(k, dtype=float).reshape(-1)
    sigma = bounds.sigma if sigma is None else sigma
    gamma = bounds.gamma if gamma is None else gamma
    if np.any(k <= 0):
        raise InvalidDesignError("gains k_i must be positive")
    d_part = float(np.sum(bounds.d_alpha**2 / (4.0 * k)))
    p_part = 0.0
    for i in range(bounds.n):
        s = np.asarray(sigma[i], dtype=float)
        g = np.asarray(gamma[i], dtype=float)
        if np.any(g <= 0):
            raise InvalidDesignError("adaptation gains gamma must be positive")
        p_part += float(np.sum(s * bounds.theta_star_norms[i] ** 2 / g))
    return d_part, 0.5 * p_part


def compute_wd(bounds: BoundSet, k, sigma=None, gamma=None) -> float:
    d_part, p_part = wd_terms(bounds, k, sigma, gamma)
    return d_part + p_part


def compute_beta(bounds: BoundSet) -> float:
    return min(2.0 * bounds.c_bar0 * bounds.psi_m, bounds.sigma0)


def residual_radius(bounds, W_d: float, beta_d: float) -> float:
    """Radius 2 psi_lo_m W_d / beta_d of the residual set for sum z_i^2.

    ``bounds`` may be a BoundSet or the number psi_lo_m itself.
    """
    if not beta_d > 0:
        raise InvalidDesignError(f"beta_d = {beta_d!r} must be positive")
    psi_lo = bounds.psi_lower_m if isinstance(bounds, BoundSet) else float(bounds)
    return 2.0 * psi_lo * W_d / beta_d


def lyapunov_value(z, phi, psi_c, gamma) -> float:
    """V for transformed states ``z``, parameter errors ``phi[i][j]`` and gains ``gamma[i][j]``."""
    z = np.asarray(z, dtype=float)
    psi_c = np.asarray(psi_c, dtype=float)
    if np.any(psi_c <= 0):
        raise InvalidDesignError("composite gains must be positive to evaluate V")
    v = 0.5 * float(np.sum(z * z / psi_c))
    for row_p, row_g in zip(phi, gamma):
        for p, g in zip(row_p, np.atleast_1d(row_g)):
            p = np.asarray(p, dtype=float)
            v += 0.5 * float(p @ p) / float(g)
    return v


def v_envelope(t, V0: float, W_d: float, beta_d: float):
    """W_d/beta_d + (V0 - W_d/beta_d) exp(-beta_d t)."""
    if not beta_d > 0:
        raise InvalidDesignError(f"beta_d = {beta_d!r} must be positive")
    floor = W_d / beta_d
    return floor + (V0 - floor) * np.exp(-beta_d * np.asarray(t, dtype=float))


def parameter_energy(phi0_norms, gamma) -> float:
    """sum_ij |Phi_ij(0)|^2 / gamma_ij from norms."""
    total = 0.0
    for row_p, row_g in zip(phi0_norms, gamma):
        total += float(np.sum(np.asarray(row_p, dtype=float) ** 2 / np.asarray(row_g, dtype=float)))
    return total


def z_transient_envelope(t, bounds: BoundSet, W_d: float, beta_d: float, phi0_norms,
                         gamma, z0_energy: float = 0.0):
    """Bound on sum z_i^2(t).

    ``z0_energy`` is sum z_i(0)^2 / psi_i^c(0); it vanishes after trajectory
    initialization, which leaves the classical two-term bound.
    """
    if not beta_d > 0:
        raise InvalidDesignError(f"beta_d = {beta_d!r} must be positive")
    psi = bounds.psi_lower_m
    energy = parameter_energy(phi0_norms, gamma) + z0_energy
    return (residual_radius(bounds, W_d, beta_d)
            + psi * energy * np.exp(-beta_d * np.asarray(t, dtype=float)))


def initial_phi_norm_bound(theta0_norms, bounds: BoundSet) -> list[np.ndarray]:
    """|theta_hat(0) - theta*| <= |theta_hat(0)| + |theta*| when theta* itself is unknown."""
    return [np.asarray(a, dtype=float) + b for a, b in zip(theta0_norms, bounds.theta_star_norms)]


# -- trajectory checks -------------------------------------------------------


@dataclass
class Tolerances:
    rel: float = 0.05
    atol: float = 0.0
    dv_rel: float = 0.05


@dataclass
class CheckReport:
    columns: list
    rows: np.ndarray
    checks: dict  # name -> (passed, worst margin)
    W_d: float
    beta_d: float

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def summary(self) -> str:
        parts = [f"{name}={'pass' if ok else 'FAIL'}(margin={m:.3g})"
                 for name, (ok, m) in self.checks.items()]
        head = "PASS" if self.passed else "FAIL"
        return f"{head} W_d={self.W_d:.12g} beta_d={self.beta_d:.12g} " + " ".join(parts)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([f"{x:.17g}" for x in row])


def finite_difference(t, y) -> np.ndarray:
    """Central differences inside, one-sided at both ends."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        return np.zeros_like(y)
    return np.gradient(y, t, edge_order=1)


def check_trajectory(log, bounds: BoundSet, k, tol: Optional[Tolerances] = None,
                     W_d: Optional[float] = None, beta_d: Optional[float] = None) -> CheckReport:
    """Compare a logged trajectory with the envelopes implied by ``bounds``.

    Always checks sum z^2 against the transient envelope.  When the log
    carries V (oracle scenarios), also checks V against its exponential
    envelope and the finite-difference dV/dt against -beta_d V + W_d.
    """
    tol = tol or Tolerances()
    need = ["t", "sum_z2"]
    missing = [c for c in need if c not in log.columns]
    if missing:
        raise MissingColumnError(f"log lacks column(s) {missing}")
    t = log.column("t")
    sz = log.column("sum_z2")
    W = compute_wd(bounds, k) if W_d is None else W_d
    beta = compute_beta(bounds) if beta_d is None else beta_d
    has_v = "V" in log.columns
    if has_v:
        V = log.column("V")
        # 2 V(0) already holds sum z(0)^2/psi + sum |Phi(0)|^2/gamma
        z_env = residual_radius(bounds, W, beta) + bounds.psi_lower_m * 2.0 * V[0] * np.exp(-beta * t)
    else:
        n = bounds.n
        theta_cols = [[c for c in log.columns if c.startswith(f"theta_norm_{i + 1}_")]
                      for i in range(n)]
        if any(not cols for cols in theta_cols):
            raise MissingColumnError("log lacks theta_norm_i_j columns for the transient bound")
        norms0 = [[log.column(c)[0] for c in cols] for cols in theta_cols]
        z_cols = [f"z{i + 1}" for i in range(n)]
        if any(c not in log.columns for c in z_cols):
            raise MissingColumnError(f"log lacks column(s) {z_cols}")
        z0 = np.array([log.column(c)[0] for c in z_cols])
        z0_energy = float(np.sum(z0**2 / bounds.psi_lower))
        z_env = z_transient_envelope(t, bounds, W, beta, initial_phi_norm_bound(norms0, bounds),
                                     bounds.gamma, z0_energy)
    z_margin = z_env * (1.0 + tol.rel) + tol.atol - sz
    columns = ["t", "sum_z2", "z_env", "z_margin"]
    data = [t, sz, z_env, z_margin]
    checks = {"z_envelope": (bool(np.all(z_margin >= 0)), float(z_margin.min()))}
    if has_v:
        v_env = v_envelope(t, V[0], W, beta)
        v_margin = v_env * (1.0 + tol.rel) + tol.atol - V
        dV = finite_difference(t, V)
        rhs = -beta * V + W
        scale = max(float(np.max(np.abs(dV))), W)
        interior = slice(1, -1) if t.size > 2 else slice(0, 0)
        dv_margin = rhs + tol.dv_rel * scale + tol.atol - dV
        columns += ["V", "V_env", "V_margin", "dV", "dV_bound", "dV_margin"]
        data += [V, v_env, v_margin, dV, rhs, dv_margin]
        checks["v_envelope"] = (bool(np.all(v_margin >= 0)), float(v_margin.min()))
        inner = dv_margin[interior]
        checks["dv_inequality"] = (bool(np.all(inner >= 0)),
                                   float(inner.min()) if inner.size else 0.0)
    return CheckReport(columns, np.column_stack(data), checks, W, beta)
