"""Scenario documents: JSON loading, cross-validation and normalized re-serialization.

Every validation failure raises :class:`ScenarioError` whose ``field`` is a
dotted path into the document (``approximators[1].grid.width``); JSON syntax
errors carry ``line L column C``.  See README.md for the full schema.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import exprlang
from .analysis import BoundSet
from .approx import BasisGrid, StageApproximator
from .controller import (
    REGULATION,
    TRACKING,
    ClosedLoopSystem,
    ControllerConfig,
    default_inputs,
)
from .errors import ExprSyntaxError, ScenarioError, TvsdacError
from .plant import (
    CompactBox,
    PlantModel,
    SchedulingSignal,
    interpolation_from_dict,
    scheduling_matrix,
    signal_family_from_dict,
)

DEFAULT_H = 1e-3
DEFAULT_T = 20.0
DEFAULT_DECIMATION = 10
THETA0_POLICIES = ("zeros", "uniform", "explicit")
BACKENDS = ("auto", "cython", "python")


def _req(d: dict, key: str, path: str) -> Any:
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    if key not in d:
        raise ScenarioError(f"{path}.{key}" if path else key, "required field is missing")
    return d[key]


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _floats(value, path: str, size: Optional[int] = None, broadcast: bool = True) -> np.ndarray:
    """Float vector; a single number fills all ``size`` slots when ``broadcast``."""
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ScenarioError(path, "expected a number or list of numbers") from None
    if size is not None:
        if arr.size == 1 and broadcast:
            arr = np.full(size, arr[0])
        elif arr.size != size:
            raise ScenarioError(path, f"expected {size} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(path, "values must be finite")
    return arr


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, "expected a number")
    return float(value)


def _parse_expr(text, path: str) -> exprlang.Expr:
    if not isinstance(text, str):
        raise ScenarioError(path, "expected an expression string")
    try:
        return exprlang.parse(text)
    except ExprSyntaxError as exc:
        raise ScenarioError(path, str(exc)) from None


def _box(value, path: str, size: int, names) -> CompactBox:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(path, "expected a list of [lower, upper] pairs") from None
    if arr.shape != (size, 2):
        raise ScenarioError(path, f"expected {size} [lower, upper] pairs")
    try:
        return CompactBox.from_intervals(arr, names)
    except TvsdacError as exc:
        raise ScenarioError(path, str(exc)) from None


@dataclass
class Scenario:
    """A validated scenario; ``data`` is the normalized document it was built from."""

    data: dict
    system: ClosedLoopSystem
    bounds: Optional[BoundSet]
    theta_star: Optional[list]
    theta0: list
    x0: np.ndarray
    xr0: Optional[np.ndarray]
    reference_init: str
    h: float
    T: float
    decimation: int
    backend: str
    x_box: Optional[CompactBox]
    nu_box: Optional[CompactBox]
    xr_box: Optional[CompactBox]
    seed: int

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def k(self) -> np.ndarray:
        return self.system.config.k

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.h))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def with_param(self, name: str, value) -> "Scenario":
        """Copy with one design parameter replaced: k, gamma, sigma (all stages) or h."""
        d = self.to_dict()
        if name == "k":
            d["controller"]["k"] = _floats(value, name, self.n).tolist()
        elif name in ("gamma", "sigma"):
            for st in d["approximators"]:
                st[name] = float(value)
        elif name == "h":
            d["integration"]["h"] = float(value)
        elif name == "T":
            d["integration"]["T"] = float(value)
        else:
            raise ScenarioError("param", f"unknown sweep parameter {name!r}; use k, gamma, sigma or h")
        return scenario_from_dict(d)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError("", f"cannot read {path}: {exc.strerror}") from None
    return scenario_from_json(text)


def scenario_from_json(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return scenario_from_dict(d)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("", "scenario must be a JSON object")
    d = copy.deepcopy(doc)
    out: dict = {}
    if "name" in d:
        out["name"] = str(d["name"])

    # plant
    p = _req(d, "plant", "")
    n = _req(p, "n", "plant")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ScenarioError("plant.n", "must be a positive integer")
    pieces = _req(p, "pieces", "plant")
    if not isinstance(pieces, list) or not pieces:
        raise ScenarioError("plant.pieces", "must be a non-empty list")
    R = len(pieces)
    phi = [[None] * R for _ in range(n)]
    psi = [[None] * R for _ in range(n)]
    for j, piece in enumerate(pieces):
        for name, table in (("phi", phi), ("psi", psi)):
            path = f"plant.pieces[{j}].{name}"
            terms = _req(piece, name, f"plant.pieces[{j}]")
            if not isinstance(terms, list) or len(terms) != n:
                raise ScenarioError(path, f"expected a list of {n} expressions")
            for i, s in enumerate(terms):
                table[i][j] = _parse_expr(s, f"{path}[{i}]")
    interp_doc = p.get("interpolation", {"family": "constant", "values": [1.0] * R})
    try:
        interp = interpolation_from_dict(interp_doc)
    except (TvsdacError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioError("plant.interpolation", str(exc)) from None
    if interp.R != R:
        raise ScenarioError("plant.interpolation", f"defines {interp.R} weights for {R} pieces")

    sched = d.get("scheduling", {"components": [{"family": "constant", "value": 0.0}]})
    comps_doc = _req(sched, "components", "scheduling")
    if not isinstance(comps_doc, list) or not comps_doc:
        raise ScenarioError("scheduling.components", "must be a non-empty list")
    comps = []
    for m, c in enumerate(comps_doc):
        try:
            comps.append(signal_family_from_dict(c))
        except (TvsdacError, KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ScenarioError(f"scheduling.components[{m}]", str(exc)) from None
    q = len(comps)
    signal = SchedulingSignal(tuple(comps), max_order=n)
    try:
        plant = PlantModel(n, tuple(map(tuple, phi)), tuple(map(tuple, psi)), interp, q,
                           {"pieces": p["pieces"]})
    except TvsdacError as exc:
        raise ScenarioError("plant", str(exc)) from None
    out["plant"] = {"n": n, "pieces": pieces, "interpolation": interp.to_dict()}
    out["scheduling"] = signal.to_dict()

    # controller
    cd = _req(d, "controller", "")
    mode = cd.get("mode", REGULATION)
    if mode not in (REGULATION, TRACKING):
        raise ScenarioError("controller.mode", f"must be {REGULATION!r} or {TRACKING!r}")
    k = _floats(_req(cd, "k", "controller"), "controller.k", n)
    if np.any(k <= 0):
        raise ScenarioError("controller.k", "gains k_i must be positive")
    c = _floats(cd["c"], "controller.c", n) if cd.get("c") is not None else None
    eta = bool(cd.get("eta", False))
    f_r = None
    ref_input = None
    ref_init = "explicit"
    ref_out = None
    if mode == TRACKING:
        ref = _req(cd, "reference", "controller")
        f_r = _parse_expr(_req(ref, "f_r", "controller.reference"), "controller.reference.f_r")
        r_doc = ref.get("r", {"family": "constant", "value": 0.0})
        try:
            ref_input = signal_family_from_dict(r_doc)
        except (TvsdacError, KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ScenarioError("controller.reference.r", str(exc)) from None
        ref_init = ref.get("init", "trajectory")
        if ref_init not in ("trajectory", "explicit"):
            raise ScenarioError("controller.reference.init", "must be 'trajectory' or 'explicit'")
        ref_out = {"f_r": ref["f_r"], "r": ref_input.to_dict(), "init": ref_init}
    try:
        cfg = ControllerConfig(n, k, mode, c, eta, f_r, ref_input)
    except TvsdacError as exc:
        raise ScenarioError("controller", str(exc)) from None
    out["controller"] = {"mode": mode, "k": k.tolist(), "c": None if c is None else c.tolist(),
                         "eta": eta}
    if ref_out is not None:
        out["controller"]["reference"] = ref_out

    # approximators
    ad = _req(d, "approximators", "")
    if not isinstance(ad, list) or len(ad) != n:
        raise ScenarioError("approximators", f"expected one entry per stage ({n})")
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ScenarioError("seed", "must be an integer")
    rng = np.random.default_rng(seed)
    stages, theta0, a_out = [], [], []
    for i, a in enumerate(ad):
        path = f"approximators[{i}]"
        inputs = a.get("inputs") if isinstance(a, dict) else None
        if inputs is None:
            inputs = list(default_inputs(i + 1, n, q, mode, eta))
        if not isinstance(inputs, list) or not all(isinstance(s, str) for s in inputs):
            raise ScenarioError(f"{path}.inputs", "expected a list of signal names")
        if "grids" in a:
            gdocs = a["grids"]
            if not isinstance(gdocs, list) or len(gdocs) != R:
                raise ScenarioError(f"{path}.grids", f"expected one grid per piece ({R})")
            gpaths = [f"{path}.grids[{j}]" for j in range(R)]
        else:
            gdocs = [_req(a, "grid", path)]
            gpaths = [f"{path}.grid"]
        built = []
        for gd, gp in zip(gdocs, gpaths):
            m = len(inputs)
            try:
                built.append(BasisGrid(_floats(_req(gd, "lower", gp), f"{gp}.lower", m),
                                       _floats(_req(gd, "upper", gp), f"{gp}.upper", m),
                                       tuple(int(x) for x in np.broadcast_to(
                                           np.asarray(_req(gd, "counts", gp)), (m,))),
                                       _number(_req(gd, "width", gp), f"{gp}.width")))
            except ScenarioError:
                raise
            except (TvsdacError, TypeError, ValueError) as exc:
                raise ScenarioError(gp, str(exc)) from None
        grids = built if len(built) == R else built * R
        gamma = _floats(_req(a, "gamma", path), f"{path}.gamma", R)
        sigma = _floats(_req(a, "sigma", path), f"{path}.sigma", R)
        th0 = a.get("theta0", {"policy": "zeros"})
        policy = th0.get("policy", "zeros") if isinstance(th0, dict) else None
        if policy not in THETA0_POLICIES:
            raise ScenarioError(f"{path}.theta0.policy", f"must be one of {THETA0_POLICIES}")
        if policy == "zeros":
            th = [np.zeros(g.N) for g in grids]
        elif policy == "uniform":
            lo = _number(th0.get("low", -0.1), f"{path}.theta0.low")
            hi = _number(th0.get("high", 0.1), f"{path}.theta0.high")
            th = [rng.uniform(lo, hi, g.N) for g in grids]
        else:
            vals = _req(th0, "values", f"{path}.theta0")
            if not isinstance(vals, list) or len(vals) != R:
                raise ScenarioError(f"{path}.theta0.values", f"expected {R} vectors")
            th = [_floats(v, f"{path}.theta0.values[{j}]", g.N)
                  for j, (v, g) in enumerate(zip(vals, grids))]
        try:
            stages.append(StageApproximator(tuple(inputs), grids, gamma, sigma, th))
        except TvsdacError as exc:
            raise ScenarioError(path, str(exc)) from None
        theta0.append(th)
        entry = {"inputs": inputs, "gamma": gamma.tolist(), "sigma": sigma.tolist(),
                 "theta0": th0 if isinstance(th0, dict) else {"policy": "zeros"}}
        if "grids" in a:
            entry["grids"] = [g.to_dict() for g in built]
        else:
            entry["grid"] = built[0].to_dict()
        a_out.append(entry)
    out["approximators"] = a_out
    out["seed"] = seed

    # boxes and initial conditions
    bd = d.get("boxes", {})
    names_x = [f"x{i + 1}" for i in range(n)]
    x_box = _box(bd["x"], "boxes.x", n, names_x) if bd.get("x") is not None else None
    nu_box = (_box(bd["nu"], "boxes.nu", q, [f"v{m + 1}" for m in range(q)])
              if bd.get("nu") is not None else None)
    xr_box = (_box(bd["xr"], "boxes.xr", n, [f"xr{i + 1}" for i in range(n)])
              if bd.get("xr") is not None else None)
    init = _req(d, "initial", "")
    x0 = _floats(_req(init, "x", "initial"), "initial.x", n, broadcast=False)
    if x_box is not None:
        bad = x_box.first_violation(x0)
        if bad is not None:
            raise ScenarioError(f"initial.x[{bad}]",
                                f"x{bad + 1}(0) = {x0[bad]!r} lies outside the compact box "
                                f"[{x_box.lower[bad]:g}, {x_box.upper[bad]:g}]")
    xr0 = None
    if mode == TRACKING:
        if ref_init == "explicit":
            xr0 = _floats(_req(init, "xr", "initial"), "initial.xr", n, broadcast=False)
            if xr_box is not None and xr_box.first_violation(xr0) is not None:
                bad = xr_box.first_violation(xr0)
                raise ScenarioError(f"initial.xr[{bad}]", "lies outside the reference box")
        elif xr_box is None:
            raise ScenarioError("boxes.xr", "trajectory initialization needs a reference box")
    out["boxes"] = {key: box.intervals() for key, box in
                    (("x", x_box), ("nu", nu_box), ("xr", xr_box)) if box is not None}
    out["initial"] = {"x": x0.tolist()}
    if xr0 is not None:
        out["initial"]["xr"] = xr0.tolist()

    # integration
    it = d.get("integration", {})
    h = _number(it.get("h", DEFAULT_H), "integration.h")
    T = _number(it.get("T", DEFAULT_T), "integration.T")
    decim = it.get("decimation", DEFAULT_DECIMATION)
    backend = it.get("backend", "auto")
    if not h > 0:
        raise ScenarioError("integration.h", "step must be positive")
    if not T > 0:
        raise ScenarioError("integration.T", "horizon must be positive")
    if abs(T / h - round(T / h)) > 1e-9 * (T / h):
        raise ScenarioError("integration.T", "horizon must be a whole number of steps")
    if isinstance(decim, bool) or not isinstance(decim, int) or decim < 1:
        raise ScenarioError("integration.decimation", "must be a positive integer")
    if backend not in BACKENDS:
        raise ScenarioError("integration.backend", f"must be one of {BACKENDS}")
    out["integration"] = {"h": h, "T": T, "decimation": decim, "backend": backend}

    try:
        system = ClosedLoopSystem(plant, signal, cfg, stages, x_box)
    except TvsdacError as exc:
        raise ScenarioError("approximators", str(exc)) from None
    try:
        ts = np.linspace(0.0, T, 21)
        plant.check_origin(scheduling_matrix(signal, ts, 1)[:, 0, :].T)
    except TvsdacError as exc:
        raise ScenarioError("plant.pieces", str(exc)) from None

    # oracle parameters and bounds
    theta_star = None
    if d.get("oracle") is not None:
        ts_doc = _req(d["oracle"], "theta_star", "oracle")
        if not isinstance(ts_doc, list) or len(ts_doc) != n:
            raise ScenarioError("oracle.theta_star", f"expected {n} stages")
        theta_star = []
        for i, row in enumerate(ts_doc):
            if not isinstance(row, list) or len(row) != R:
                raise ScenarioError(f"oracle.theta_star[{i}]", f"expected {R} vectors")
            theta_star.append([_floats(v, f"oracle.theta_star[{i}][{j}]", stages[i].sizes[j])
                               for j, v in enumerate(row)])
        out["oracle"] = {"theta_star": [[v.tolist() for v in row] for row in theta_star]}
    bounds = None
    if d.get("bounds") is not None:
        b = d["bounds"]
        lo = _floats(_req(b, "psi_lower", "bounds"), "bounds.psi_lower", n)
        hi = _floats(_req(b, "psi_upper", "bounds"), "bounds.psi_upper", n)
        rate = _floats(b.get("psi_rate", 0.0), "bounds.psi_rate", n)
        dal = _floats(b.get("d_alpha", 0.0), "bounds.d_alpha", n)
        if "theta_star_norms" in b:
            tsn = b["theta_star_norms"]
            if not isinstance(tsn, list) or len(tsn) != n:
                raise ScenarioError("bounds.theta_star_norms", f"expected {n} stages")
            norms = [_floats(r, f"bounds.theta_star_norms[{i}]", R) for i, r in enumerate(tsn)]
        elif theta_star is not None:
            norms = [np.array([np.linalg.norm(v) for v in row]) for row in theta_star]
        else:
            raise ScenarioError("bounds.theta_star_norms", "required without oracle.theta_star")
        cb = b.get("c", None if c is None else c.tolist())
        if cb is None:
            raise ScenarioError("bounds.c", "needed here or in controller.c")
        cb = _floats(cb, "bounds.c", n)
        try:
            bounds = BoundSet(lo, hi, rate, dal, norms, cb,
                              [st.sigma for st in stages], [st.gamma for st in stages])
        except TvsdacError as exc:
            raise ScenarioError("bounds", str(exc)) from None
        out["bounds"] = bounds.to_dict()

    return Scenario(out, system, bounds, theta_star, theta0, x0, xr0, ref_init, h, T, decim,
                    backend, x_box, nu_box, xr_box, seed)
