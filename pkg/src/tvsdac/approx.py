"""Linear-in-parameter approximators with Gaussian radial basis functions."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateDerivativeWarning,
    DerivativeDegenerateError,
    DimensionError,
    NoRootError,
    StructureError,
)

SOLVE_TOL = 1e-10
DERIV_TOL = 1e-8
MAX_NEWTON = 50


@dataclass(frozen=True, eq=False)
class BasisGrid:
    """Gaussian centers on a regular grid over ``[lower, upper]`` with a shared width."""

    lower: np.ndarray
    upper: np.ndarray
    counts: tuple[int, ...]
    width: float

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (lo.shape == hi.shape and len(counts) == lo.size):
            raise DimensionError("grid lower/upper/counts must have the same length")
        if any(c < 1 for c in counts):
            raise StructureError("grid counts must be >= 1")
        if not self.width > 0:
            raise StructureError("basis width must be positive")
        if np.any(hi < lo):
            raise StructureError("grid upper bound below lower bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "width", float(self.width))
        axes = [np.linspace(a, b, c) if c > 1 else np.array([(a + b) / 2])
                for a, b, c in zip(lo, hi, counts)]
        centers = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, lo.size)
        object.__setattr__(self, "centers", centers)

    @property
    def m(self) -> int:
        return self.lower.size

    @property
    def N(self) -> int:
        return self.centers.shape[0]

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "counts": list(self.counts), "width": self.width}


def basis_eval(grid: BasisGrid, x) -> np.ndarray:
    """zeta_k(x) = exp(-|x - c_k|^2 / w^2)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.m,):
        raise DimensionError(f"basis expects {grid.m} inputs, got shape {x.shape}")
    d = x - grid.centers
    return np.exp(-np.sum(d * d, axis=1) / (grid.width * grid.width))


def basis_gradient(grid: BasisGrid, x) -> np.ndarray:
    """(N, m) matrix of d zeta_k / d x_l."""
    zeta = basis_eval(grid, x)
    d = np.asarray(x, dtype=float) - grid.centers
    return (-2.0 / grid.width**2) * d * zeta[:, None]


@dataclass(eq=False)
class StageApproximator:
    """Approximator for one backstepping stage: one basis and parameter vector per piece.

    ``inputs`` names the signals fed to the basis, in order (see
    :mod:`tvsdac.controller` for the vocabulary).  ``theta`` holds the current
    parameter vectors; the simulator passes explicit vectors taken from the
    integrated state instead of mutating this object.
    """

    inputs: tuple[str, ...]
    grids: list[BasisGrid]
    gamma: np.ndarray
    sigma: np.ndarray
    theta: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        R = len(self.grids)
        self.gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (R,)).copy()
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (R,)).copy()
        if np.any(self.gamma <= 0) or np.any(self.sigma <= 0):
            raise StructureError("adaptation gains gamma and sigma must be positive")
        for g in self.grids:
            if g.m != len(self.inputs):
                raise DimensionError(
                    f"grid has {g.m} dimensions but the stage declares {len(self.inputs)} inputs")
        if not self.theta:
            self.theta = [np.zeros(g.N) for g in self.grids]
        self.theta = [np.asarray(t, dtype=float).copy() for t in self.theta]
        if len(self.theta) != R or any(t.shape != (g.N,) for t, g in zip(self.theta, self.grids)):
            raise DimensionError("parameter vector lengths must match the grid sizes")

    @property
    def R(self) -> int:
        return len(self.grids)

    @property
    def sizes(self) -> list[int]:
        return [g.N for g in self.grids]

    def basis(self, x) -> list[np.ndarray]:
        """zeta_j(x) for every piece, evaluating shared grids once."""
        cache: dict[int, np.ndarray] = {}
        out = []
        for g in self.grids:
            key = id(g)
            if key not in cache:
                cache[key] = basis_eval(g, x)
            out.append(cache[key])
        return out


def _check_rho(stage: StageApproximator, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (stage.R,):
        raise DimensionError(f"expected {stage.R} interpolation weights, got {rho.shape}")
    return rho


def approximator_eval(stage: StageApproximator, rho, x, theta=None) -> float:
    """alpha_hat = sum_j rho_j theta_j . zeta_j(x)."""
    rho = _check_rho(stage, rho)
    theta = stage.theta if theta is None else theta
    total = 0.0
    for r, th, z in zip(rho, theta, stage.basis(x)):
        total += r * float(th @ z)
    return total


def approximator_gradient(stage: StageApproximator, rho, x, theta=None) -> np.ndarray:
    """d alpha_hat / d x (length m)."""
    rho = _check_rho(stage, rho)
    theta = stage.theta if theta is None else theta
    grad = np.zeros(len(stage.inputs))
    for r, th, g in zip(rho, theta, stage.grids):
        grad += r * (th @ basis_gradient(g, x))
    return grad


def solve_reference_init(stage: StageApproximator, rho, fixed_inputs, target: float,
                         search_interval: Sequence[float], unknown: int, theta=None) -> float:
    """Find x with alpha_hat(fixed_inputs, input[unknown] = x) = target.

    ``fixed_inputs`` is the full input vector; its ``unknown`` entry is ignored.
    """
    base = np.array(fixed_inputs, dtype=float)
    if not 0 <= unknown < base.size:
        raise DimensionError("unknown input index out of range")

    def g(x: float) -> tuple[float, float]:
        base[unknown] = x
        val = approximator_eval(stage, rho, base, theta) - target
        der = approximator_gradient(stage, rho, base, theta)[unknown]
        return val, der

    return solve_scalar(g, search_interval, name=stage.inputs[unknown])


def solve_scalar(g, search_interval: Sequence[float], name: str = "x") -> float:
    """Root of ``g`` (returning value and derivative) by safeguarded Newton.

    Newton steps stay inside a sign-change bracket, falling back to bisection;
    without a bracket, plain Newton runs from the interval midpoint.  If the
    midpoint already meets the tolerance while the derivative is below
    ``DERIV_TOL`` (a flat function), the midpoint is returned with a
    :class:`DegenerateDerivativeWarning`.
    """
    lo, hi = float(search_interval[0]), float(search_interval[1])
    if not hi > lo:
        raise DimensionError("search interval must have positive width")

    mid = 0.5 * (lo + hi)
    fm, dm = g(mid)
    if abs(fm) <= SOLVE_TOL and abs(dm) < DERIV_TOL:
        warnings.warn(f"function is flat in {name}; returning the interval midpoint",
                      DegenerateDerivativeWarning, stacklevel=3)
        return mid
    if abs(fm) <= SOLVE_TOL:
        return _polish(g, mid, name)

    flo, _ = g(lo)
    fhi, _ = g(hi)
    if flo * fhi <= 0.0:
        a, b = (lo, hi) if flo <= 0.0 else (hi, lo)  # g(a) <= 0 <= g(b)
        x, fx, dx = mid, fm, dm
        for _ in range(200):
            if abs(fx) <= SOLVE_TOL:
                return _polish(g, x, name)
            if fx < 0.0:
                a = x
            else:
                b = x
            xn = x - fx / dx if abs(dx) >= DERIV_TOL else None
            if xn is None or not min(a, b) < xn < max(a, b):
                xn = 0.5 * (a + b)
            if xn == x:
                break
            x = xn
            fx, dx = g(x)
        if abs(fx) <= SOLVE_TOL:
            return _polish(g, x, name)
        raise NoRootError(f"bracketed search for {name} stalled at {x!r} (residual {fx!r})")

    x, fx, dx = mid, fm, dm
    for _ in range(MAX_NEWTON):
        if abs(dx) < DERIV_TOL:
            raise DerivativeDegenerateError(
                f"|d/d{name}| = {abs(dx):.3g} < {DERIV_TOL:g} at {name}={x!r}; "
                "the initialization equation cannot be solved")
        x = x - fx / dx
        fx, dx = g(x)
        if abs(fx) <= SOLVE_TOL:
            return _polish(g, x, name)
    raise NoRootError(
        f"no sign change on [{lo!r}, {hi!r}] and Newton for {name} did not converge "
        f"in {MAX_NEWTON} iterations")


def _polish(g, x: float, name: str) -> float:
    fx, dx = g(x)
    if abs(dx) < DERIV_TOL:
        raise DerivativeDegenerateError(
            f"|d/d{name}| = {abs(dx):.3g} < {DERIV_TOL:g} at the solution {name}={x!r}")
    # a few extra Newton steps drive the residual to rounding level
    for _ in range(3):
        xn = x - fx / dx
        fn, dn = g(xn)
        if not abs(fn) < abs(fx):
            break
        x, fx, dx = xn, fn, dn
        if fx == 0.0 or abs(dx) < DERIV_TOL:
            break
    return x
