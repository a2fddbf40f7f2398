"""Backend selection for the closed-loop integration kernel.

The compiled extension ``tvsdac._ckernel`` is used when it imports; otherwise
the pure-Python ``tvsdac._pykernel`` runs.  ``TVSDAC_BACKEND=python`` forces
the fallback.
"""

from __future__ import annotations

import os
from types import SimpleNamespace
from typing import NamedTuple, Optional

import numpy as np

from . import _pykernel, exprlang
from .errors import (
    CompactSetExit,
    IntegrationError,
    InterpolationError,
    PlantEvaluationError,
    SingularGainError,
)
from .plant import ConstantInterpolation, GaussianInterpolation, SmoothStepInterpolation

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

ST_OK, ST_NONFINITE, ST_SINGULAR, ST_BOX, ST_EXPR, ST_INTERP = range(6)


def available_backends() -> list[str]:
    return (["cython"] if _ckernel is not None else []) + ["python"]


def default_backend() -> str:
    forced = os.environ.get("TVSDAC_BACKEND", "").strip().lower()
    if forced in ("python", "cython"):
        if forced == "cython" and _ckernel is None:
            raise ImportError("TVSDAC_BACKEND=cython but the compiled kernel is not built")
        return forced
    return "cython" if _ckernel is not None else "python"


BACKEND = default_backend()


def pack_system(system) -> SimpleNamespace:
    """Flatten a ClosedLoopSystem into the arrays the compiled kernel reads."""
    plant, cfg = system.plant, system.config
    n, q, R = plant.n, plant.q, plant.R
    slots = {f"x{k + 1}": k for k in range(n)}
    slots.update({f"xr{k + 1}": n + k for k in range(n)})
    slots["r"] = 2 * n
    exprs = [plant.phi[i][j] for i in range(n) for j in range(R)]
    exprs += [plant.psi[i][j] for i in range(n) for j in range(R)]
    exprs.append(cfg.f_r if cfg.f_r is not None else exprlang.Num(0.0))
    code, consts, start, length = [], [], [], []
    depth = 1
    for e in exprs:
        prog = exprlang.compile_program(e, slots)
        shifted = prog.code.copy()
        const_ops = (shifted[:, 0] == exprlang.OP_CONST) | (shifted[:, 0] == exprlang.OP_POW)
        shifted[const_ops, 1] += len(consts)
        start.append(sum(len(c) for c in code))
        length.append(len(shifted))
        code.append(shifted)
        consts.extend(prog.consts.tolist())
        depth = max(depth, prog.depth)

    interp = plant.interpolation
    p = SimpleNamespace(
        n=n, q=q, R=R, dim=system.dim, tracking=int(cfg.tracking), eta=int(cfg.eta),
        k=cfg.k, c=cfg.c if cfg.c is not None else np.zeros(n),
        code=np.concatenate(code), consts=np.asarray(consts), max_depth=depth,
        prog_start=np.asarray(start), prog_len=np.asarray(length),
        interp_kind=0, interp_component=0, interp_values=np.zeros(R),
        interp_widths=np.ones(R), interp_centers=np.zeros((R, 1)), transitions=np.zeros((1, 2)),
    )
    if isinstance(interp, ConstantInterpolation):
        p.interp_values = np.asarray(interp.values, dtype=float)
    elif isinstance(interp, GaussianInterpolation):
        p.interp_kind = 1
        p.interp_centers = interp.centers
        p.interp_widths = interp.widths
    elif isinstance(interp, SmoothStepInterpolation):
        p.interp_kind = 2
        p.interp_component = interp.component
        p.transitions = np.asarray(interp.transitions, dtype=float).reshape(-1, 2)
    else:
        raise TypeError(f"compiled kernel does not support {type(interp).__name__}")

    blk = {key: [] for key in ("stage", "piece", "theta", "N", "m", "center", "input",
                               "zeta", "w2", "gamma", "sigma")}
    centers, inputs = [], []
    zeta_pos = 0
    for i, st in enumerate(system.stages):
        for j, grid in enumerate(st.grids):
            blk["stage"].append(i)
            blk["piece"].append(j)
            blk["theta"].append(system.theta_slices[i][j].start)
            blk["N"].append(grid.N)
            blk["m"].append(grid.m)
            blk["center"].append(sum(c.size for c in centers))
            blk["input"].append(sum(len(x) for x in inputs))
            blk["zeta"].append(zeta_pos)
            blk["w2"].append(grid.width * grid.width)
            blk["gamma"].append(st.gamma[j])
            blk["sigma"].append(st.sigma[j])
            centers.append(grid.centers.reshape(-1))
            inputs.append(system.input_index[i])
            zeta_pos += grid.N
    for key, vals in blk.items():
        dtype = np.float64 if key in ("w2", "gamma", "sigma") else np.int32
        setattr(p, f"blk_{key}", np.asarray(vals, dtype=dtype))
    p.centers = np.concatenate(centers)
    p.input_idx = np.concatenate(inputs).astype(np.int32)
    p.zeta_size = zeta_pos
    lay = system.layout
    p.xr_off, p.fr_off, p.eta_off, p.nsig = lay.xr_offset, lay.fr_offset, lay.eta_offset, lay.size
    p.has_box = int(system.box is not None)
    p.box_lo = system.box.lower if system.box is not None else np.zeros(n)
    p.box_hi = system.box.upper if system.box is not None else np.zeros(n)
    return p


def make_kernel(system, backend: Optional[str] = None):
    backend = backend or BACKEND
    if backend == "cython":
        if _ckernel is None:
            raise ImportError("compiled kernel is not available")
        return _ckernel.ClosedLoopKernel(pack_system(system))
    if backend == "python":
        return _pykernel.ClosedLoopKernel(system)
    raise ValueError(f"unknown backend {backend!r}")


class IntegrationResult(NamedTuple):
    steps: np.ndarray
    states: np.ndarray


def raise_for_status(system, kernel, status: int, t: float, detail: int, y=None):
    """Turn a kernel status code into the matching exception."""
    if status == ST_OK:
        return
    err = getattr(kernel, "error", None)
    n, R = system.n, system.plant.R
    if status == ST_BOX:
        box = system.box
        raise CompactSetExit(t, f"x{detail + 1}", float(y[detail]) if y is not None else float("nan"),
                             (box.lower[detail], box.upper[detail]))
    if status == ST_NONFINITE:
        raise IntegrationError(t, f"non-finite state component {detail}")
    if err is not None:
        raise IntegrationError(t, str(err)) from err
    if status == ST_SINGULAR:
        raise IntegrationError(t, str(SingularGainError(detail + 1, 0.0)))
    if status == ST_INTERP:
        raise IntegrationError(t, str(InterpolationError(detail + 1, "non-finite value")))
    if status == ST_EXPR:
        if detail == 2 * n * R:
            raise IntegrationError(t, "reference model f_r: domain error")
        kind = "phi" if detail < n * R else "psi"
        idx = detail % (n * R)
        raise IntegrationError(t, str(PlantEvaluationError(idx // R + 1, idx % R + 1,
                                                           f"{kind}: domain error")))
    raise IntegrationError(t, f"kernel status {status}")
