"""Plants made of R strict-feedback pieces blended by interpolation functions.

Each piece j contributes drift ``phi[i][j](X_i)`` and input gain
``psi[i][j](X_i)`` to stage i; the pieces are mixed with weights
``rho_j(v)`` of a scheduling signal ``v(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang
from .errors import (
    ExprEvalError,
    InterpolationError,
    PlantEvaluationError,
    SchedulingError,
    SingularGainError,
    StructureError,
)

PSI_SINGULAR_TOL = 1e-12
ORIGIN_TOL = 1e-9


# -- interpolation families --------------------------------------------------


class Interpolation:
    """Base for the weight families rho_1..rho_R."""

    kind = "abstract"
    R: int
    q: int

    def weights(self, v) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantInterpolation(Interpolation):
    values: tuple[float, ...] = (1.0,)
    q: int = 1
    kind = "constant"

    @property
    def R(self) -> int:
        return len(self.values)

    def weights(self, v) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def to_dict(self) -> dict:
        return {"family": "constant", "values": list(self.values)}


@dataclass(frozen=True)
class GaussianInterpolation(Interpolation):
    """Normalized Gaussian bumps, rho_j = g_j / sum_k g_k, g_j = exp(-|v-c_j|^2 / w_j^2)."""

    centers: np.ndarray  # (R, q)
    widths: np.ndarray  # (R,)
    kind = "gaussian"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if c.shape[0] == 1 and np.ndim(self.centers) == 1:
            c = c.T
        w = np.broadcast_to(np.asarray(self.widths, dtype=float), (c.shape[0],)).copy()
        if np.any(w <= 0):
            raise StructureError("gaussian interpolation widths must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @property
    def R(self) -> int:
        return self.centers.shape[0]

    @property
    def q(self) -> int:
        return self.centers.shape[1]

    def weights(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)[: self.q]
        expo = -np.sum((v - self.centers) ** 2, axis=1) / self.widths**2
        # shift by the max exponent so far-away v does not underflow every bump
        g = np.exp(expo - expo.max())
        return g / g.sum()

    def to_dict(self) -> dict:
        return {"family": "gaussian", "centers": self.centers.tolist(),
                "widths": self.widths.tolist()}


def _smooth_step(s: float) -> float:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0
    a = math.exp(-1.0 / s)
    b = math.exp(-1.0 / (1.0 - s))
    return a / (a + b)


@dataclass(frozen=True)
class SmoothStepInterpolation(Interpolation):
    """Partition of unity over scalar v built from R-1 smooth transitions.

    Transition k moves weight from piece k to piece k+1 as v goes from a_k to b_k.
    """

    transitions: tuple[tuple[float, float], ...]
    component: int = 0
    kind = "smoothstep"

    def __post_init__(self):
        tr = tuple((float(a), float(b)) for a, b in self.transitions)
        for a, b in tr:
            if not b > a:
                raise StructureError(f"smoothstep transition ({a}, {b}) needs b > a")
        for (a0, b0), (a1, b1) in zip(tr, tr[1:]):
            if a1 < a0 or b1 < b0:
                raise StructureError("smoothstep transitions must be ordered")
        object.__setattr__(self, "transitions", tr)

    @property
    def R(self) -> int:
        return len(self.transitions) + 1

    @property
    def q(self) -> int:
        return self.component + 1

    def weights(self, v) -> np.ndarray:
        x = float(np.asarray(v, dtype=float).reshape(-1)[self.component])
        s = [_smooth_step((x - a) / (b - a)) for a, b in self.transitions]
        upper = [1.0] + s
        lower = s + [0.0]
        return np.array([hi - lo for hi, lo in zip(upper, lower)])

    def to_dict(self) -> dict:
        return {"family": "smoothstep", "transitions": [list(t) for t in self.transitions],
                "component": self.component}


def interpolation_from_dict(d: dict) -> Interpolation:
    family = d.get("family")
    if family == "constant":
        return ConstantInterpolation(tuple(float(x) for x in d.get("values", [1.0])))
    if family == "gaussian":
        return GaussianInterpolation(np.asarray(d["centers"], dtype=float),
                                     np.asarray(d.get("widths", 1.0), dtype=float))
    if family == "smoothstep":
        return SmoothStepInterpolation(tuple(tuple(t) for t in d["transitions"]),
                                       int(d.get("component", 0)))
    raise StructureError(f"unknown interpolation family {family!r}")


def eval_interpolation(model: "PlantModel", v) -> np.ndarray:
    """Return [rho_1(v), ..., rho_R(v)]."""
    rho = model.interpolation.weights(v)
    bad = np.flatnonzero(~np.isfinite(rho))
    if bad.size:
        raise InterpolationError(int(bad[0]) + 1, f"non-finite value at v={np.asarray(v).tolist()}")
    return rho


# -- scheduling signals ------------------------------------------------------


class SignalFamily:
    """Scalar closed-form signal with analytic derivatives of any order."""

    def derivatives(self, t, order: int) -> np.ndarray:
        """Array of shape ``(order,) + shape(t)``; row k is the k-th derivative."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantSignal(SignalFamily):
    value: float = 0.0

    def derivatives(self, t, order):
        t = np.asarray(t, dtype=float)
        out = np.zeros((order,) + t.shape)
        if order:
            out[0] = self.value
        return out

    def to_dict(self):
        return {"family": "constant", "value": self.value}


@dataclass(frozen=True)
class SumOfSines(SignalFamily):
    """offset + sum_k A_k sin(w_k t + phase_k)."""

    terms: tuple[tuple[float, float, float], ...]
    offset: float = 0.0

    def derivatives(self, t, order):
        t = np.asarray(t, dtype=float)
        out = np.zeros((order,) + t.shape)
        for amp, omega, phase in self.terms:
            arg = omega * t + phase
            for k in range(order):
                out[k] += amp * omega**k * np.sin(arg + k * math.pi / 2)
        if order:
            out[0] += self.offset
        return out

    def to_dict(self):
        if len(self.terms) == 1:
            amp, omega, phase = self.terms[0]
            return {"family": "sinusoid", "amplitude": amp, "frequency": omega,
                    "phase": phase, "offset": self.offset}
        return {"family": "sum-of-sinusoids", "offset": self.offset,
                "terms": [{"amplitude": a, "frequency": w, "phase": p} for a, w, p in self.terms]}


@dataclass(frozen=True)
class Chirp(SignalFamily):
    """offset + A sin(phase + w0 t + rate t^2 / 2).

    Derivatives come from d^k/dt^k exp(i theta) = P_k(t) exp(i theta) with
    P_{k+1} = P_k' + i theta'(t) P_k.  They grow with t, so they are bounded
    only on finite horizons.
    """

    amplitude: float
    omega0: float
    rate: float
    phase: float = 0.0
    offset: float = 0.0

    def derivatives(self, t, order):
        t = np.asarray(t, dtype=float)
        theta = self.phase + self.omega0 * t + 0.5 * self.rate * t**2
        carrier = np.exp(1j * theta)
        dtheta = np.polynomial.Polynomial([self.omega0, self.rate])
        poly = np.polynomial.Polynomial([1.0 + 0.0j])
        out = np.zeros((order,) + t.shape)
        for k in range(order):
            out[k] = self.amplitude * np.imag(poly(t) * carrier)
            poly = poly.deriv() + 1j * dtheta * poly
        if order:
            out[0] += self.offset
        return out

    def to_dict(self):
        return {"family": "chirp", "amplitude": self.amplitude, "frequency": self.omega0,
                "rate": self.rate, "phase": self.phase, "offset": self.offset}


def signal_family_from_dict(d: dict) -> SignalFamily:
    family = d.get("family")
    if family == "constant":
        return ConstantSignal(float(d.get("value", 0.0)))
    if family == "sinusoid":
        return SumOfSines(((float(d.get("amplitude", 1.0)), float(d.get("frequency", 1.0)),
                            float(d.get("phase", 0.0))),), float(d.get("offset", 0.0)))
    if family == "sum-of-sinusoids":
        terms = tuple((float(x.get("amplitude", 1.0)), float(x.get("frequency", 1.0)),
                       float(x.get("phase", 0.0))) for x in d["terms"])
        return SumOfSines(terms, float(d.get("offset", 0.0)))
    if family == "chirp":
        return Chirp(float(d.get("amplitude", 1.0)), float(d.get("frequency", 1.0)),
                     float(d.get("rate", 0.0)), float(d.get("phase", 0.0)),
                     float(d.get("offset", 0.0)))
    raise SchedulingError(f"unknown signal family {family!r}")


@dataclass(frozen=True)
class SchedulingSignal:
    """q closed-form components; derivatives up to ``max_order - 1`` are exposed."""

    components: tuple[SignalFamily, ...]
    max_order: int = 1

    @property
    def q(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components]}


def scheduling_matrix(signal: SchedulingSignal, t, order: int) -> np.ndarray:
    """nu = [v, v', ..., v^(order-1)] as a (q, order) matrix (or (q, order, len(t)))."""
    if order > signal.max_order:
        raise SchedulingError(
            f"requested {order} derivative columns but only {signal.max_order} are available")
    if order < 0:
        raise SchedulingError("order must be non-negative")
    return np.stack([c.derivatives(t, order) for c in signal.components])


# -- compact boxes -----------------------------------------------------------


@dataclass(frozen=True)
class CompactBox:
    """Product of closed intervals; ``lower[k] < upper[k]``."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise StructureError("box bounds have different lengths")
        if np.any(~(hi > lo)):
            raise StructureError("every box interval needs positive width")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"c{k + 1}" for k in range(lo.size)))

    @classmethod
    def from_intervals(cls, intervals, names=()) -> "CompactBox":
        arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], tuple(names))

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, k: int) -> "CompactBox":
        """Box for the first k coordinates (the set for X_k)."""
        return CompactBox(self.lower[:k], self.upper[:k], self.names[:k])

    def first_violation(self, point):
        p = np.asarray(point, dtype=float).reshape(-1)
        bad = np.flatnonzero(~((p >= self.lower[: p.size]) & (p <= self.upper[: p.size])))
        return int(bad[0]) if bad.size else None

    def intervals(self) -> list[list[float]]:
        return np.column_stack([self.lower, self.upper]).tolist()


def inside_compact(box: CompactBox, point) -> bool:
    """True iff every coordinate of ``point`` lies in its closed interval."""
    return box.first_violation(point) is None


# -- plant -------------------------------------------------------------------


def state_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


@dataclass(frozen=True)
class PlantModel:
    """``phi[i][j]`` and ``psi[i][j]`` are expressions in x1..x(i+1) (0-based i)."""

    n: int
    phi: tuple[tuple[exprlang.Expr, ...], ...]
    psi: tuple[tuple[exprlang.Expr, ...], ...]
    interpolation: Interpolation
    q: int = 1
    sources: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise StructureError("state dimension n must be >= 1")
        R = self.interpolation.R
        for name, table in (("phi", self.phi), ("psi", self.psi)):
            if len(table) != self.n or any(len(row) != R for row in table):
                raise StructureError(f"{name} must have n={self.n} rows of R={R} pieces")
        if self.interpolation.q > self.q:
            raise StructureError("interpolation family uses more scheduling components than q")
        for i in range(self.n):
            allowed = set(state_names(i + 1))
            for j in range(R):
                for name, e in (("phi", self.phi[i][j]), ("psi", self.psi[i][j])):
                    extra = exprlang.free_vars(e) - allowed
                    if extra:
                        raise StructureError(
                            f"{name}[{i + 1}][{j + 1}] references {sorted(extra)}; "
                            f"stage {i + 1} may only use {sorted(allowed)}")

    @property
    def R(self) -> int:
        return self.interpolation.R

    @classmethod
    def from_strings(cls, phi: Sequence[Sequence[str]], psi: Sequence[Sequence[str]],
                     interpolation: Interpolation, q: int = 1) -> "PlantModel":
        """Build from string tables indexed ``[i][j]`` (stage, piece)."""
        n = len(phi)
        parsed_phi = tuple(tuple(exprlang.parse(s) for s in row) for row in phi)
        parsed_psi = tuple(tuple(exprlang.parse(s) for s in row) for row in psi)
        return cls(n, parsed_phi, parsed_psi, interpolation, q,
                   {"phi": [list(r) for r in phi], "psi": [list(r) for r in psi]})

    def _env(self, X) -> dict:
        return {f"x{k + 1}": float(X[k]) for k in range(len(X))}

    def _term(self, table, i, j, env) -> float:
        try:
            return exprlang.evaluate(table[i][j], env)
        except ExprEvalError as exc:
            raise PlantEvaluationError(i + 1, j + 1, str(exc)) from exc

    def composite(self, i: int, X, rho) -> tuple[float, float]:
        """Blended (phi_i^c, psi_i^c) for 0-based stage i, without the singularity check."""
        env = self._env(X[: i + 1])
        phic = 0.0
        psic = 0.0
        for j in range(self.R):
            phic += rho[j] * self._term(self.phi, i, j, env)
            psic += rho[j] * self._term(self.psi, i, j, env)
        return phic, psic

    def check_origin(self, v_samples) -> None:
        """Spot-check phi_i^c(0, v) = 0 over the given scheduling samples."""
        zero = np.zeros(self.n)
        for v in v_samples:
            rho = self.interpolation.weights(v)
            for i in range(self.n):
                phic, _ = self.composite(i, zero, rho)
                if abs(phic) > ORIGIN_TOL:
                    raise StructureError(
                        f"phi{i + 1}^c(0, v={np.asarray(v).tolist()}) = {phic!r}; "
                        "the origin must be an equilibrium of the drift")


def composite_affine(model: PlantModel, X, v, stage: int) -> tuple[float, float]:
    """(phi_i^c, psi_i^c) at 1-based ``stage``; raises on a singular gain."""
    if not 1 <= stage <= model.n:
        raise StructureError(f"stage must be in 1..{model.n}")
    rho = eval_interpolation(model, v)
    phic, psic = model.composite(stage - 1, np.asarray(X, dtype=float), rho)
    if abs(psic) <= PSI_SINGULAR_TOL:
        raise SingularGainError(stage, psic)
    return phic, psic


def plant_derivative_rho(model: PlantModel, X, u: float, rho) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    dx = np.empty(model.n)
    for i in range(model.n):
        phic, psic = model.composite(i, X, rho)
        if abs(psic) <= PSI_SINGULAR_TOL:
            raise SingularGainError(i + 1, psic)
        nxt = X[i + 1] if i + 1 < model.n else u
        dx[i] = phic + psic * nxt
    return dx


def plant_derivative(model: PlantModel, X, u: float, v) -> np.ndarray:
    """Right-hand side of the plant: x_i' = phi_i^c + psi_i^c x_{i+1}, x_n' = phi_n^c + psi_n^c u."""
    return plant_derivative_rho(model, X, u, eval_interpolation(model, v))
