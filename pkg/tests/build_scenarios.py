"""Generate the scenario documents under scenarios/.

Run ``python tests/build_scenarios.py`` to rebuild them.  The representable
scenario S1 is constructed so that the stage-1 ideal law is exactly a
weighted sum of the stage-1 basis functions; the stage-2 representation
error is measured with the independent loop in ``oracles.py`` and frozen
into ``bounds.d_alpha`` with a 10% margin.
"""

import json
import math
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))
from oracles import InterpolatedLoop, gaussian_basis, grid_centers, rk4  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(ROOT, "scenarios")

# -- S1: representable regulation scenario ----------------------------------

S1_PSI = 2.0
S1_C = (1.0, 0.25)  # c_2 = sigma/2 makes beta_d equal to sigma
S1_K = (1.0, 1.0)
S1_GAMMA = 5.0
S1_SIGMA = 0.5
S1_OMEGA = 0.5
S1_RHO_CENTERS = (-1.0, 1.0)
S1_RHO_WIDTH = 1.0
S1_W1 = 1.0
S1_W2 = 1.0
S1_CENTERS1 = grid_centers([-1.0], [1.0], [3])
S1_CENTERS2 = grid_centers([-1.0, -1.0], [1.0, 1.0], [3, 3])
S1_X0 = (0.5, -0.3)
# odd in the centers, so every sum vanishes at the origin
S1_THETA1 = (np.array([1.0, 0.0, -1.0]), np.array([-0.5, 0.0, 0.5]))
S1_THETA2 = (0.5 * (S1_CENTERS2[:, 0] + S1_CENTERS2[:, 1]),
             -0.3 * S1_CENTERS2[:, 0] + 0.6 * S1_CENTERS2[:, 1])
S1_D2_MARGIN = 1.1


def _num(x: float) -> str:
    return f"({float(x)!r})"


def _rbf_sum(weights, centers, width, names) -> str:
    terms = []
    for w, c in zip(weights, centers):
        if w == 0.0:
            continue
        dist = " + ".join(f"(({v} - {_num(ci)})^2)" for v, ci in zip(names, c))
        terms.append(f"{_num(w)}*exp(-({dist})/({_num(width)}^2))")
    return " + ".join(terms) if terms else "0"


def s1_phi_strings():
    """phi[i][j] such that the stage-1 ideal law equals sum_j rho_j theta1_j . zeta1."""
    phi1 = [f"-{_num(S1_C[0])}*x1 - {_num(S1_PSI)}*({_rbf_sum(th, S1_CENTERS1, S1_W1, ['x1'])})"
            for th in S1_THETA1]
    phi2 = [f"-{_num(S1_PSI)}*({_rbf_sum(th, S1_CENTERS2, S1_W2, ['x1', 'x2'])})"
            for th in S1_THETA2]
    return [phi1, phi2]


def s1_oracle_loop() -> InterpolatedLoop:
    def stage1(th):
        return lambda x1, x2: (-S1_C[0] * x1
                               - S1_PSI * th @ gaussian_basis([x1], S1_CENTERS1, S1_W1))

    def stage2(th):
        return lambda x1, x2: -S1_PSI * th @ gaussian_basis([x1, x2], S1_CENTERS2, S1_W2)

    phi = [[stage1(th) for th in S1_THETA1], [stage2(th) for th in S1_THETA2]]
    const = lambda x1, x2: S1_PSI  # noqa: E731
    psi = [[const, const], [const, const]]
    bases = [(S1_CENTERS1, S1_W1, [0]), (S1_CENTERS2, S1_W2, [0, 1])]
    return InterpolatedLoop(phi, psi, bases, S1_K, S1_GAMMA, S1_SIGMA,
                            lambda t: math.sin(S1_OMEGA * t), S1_RHO_CENTERS, S1_RHO_WIDTH)


def s1_theta_star():
    return [[t.copy() for t in S1_THETA1], [t.copy() for t in S1_THETA2]]


def s1_initial_state():
    sizes = [len(S1_CENTERS1)] * 2 + [len(S1_CENTERS2)] * 2
    return np.concatenate([S1_X0, np.zeros(sum(sizes))])


def measure_s1_delta2(T=20.0, h=1e-3, every=10):
    """max |delta_2| along the oracle trajectory sampled every ``every`` steps."""
    loop = s1_oracle_loop()
    ys = rk4(loop.rhs, s1_initial_state(), h, int(round(T / h)))
    idx = range(0, ys.shape[0], every)
    th2 = S1_THETA2
    return max(abs(loop.stage2_error(s * h, ys[s], S1_C[1], th2)) for s in idx)


def s1_dict(d2: float, x0=S1_X0, T=20.0, name="S1 representable regulation") -> dict:
    phi = s1_phi_strings()
    psi = str(S1_PSI)
    return {
        "name": name,
        "plant": {
            "n": 2,
            "pieces": [{"phi": [phi[0][j], phi[1][j]], "psi": [psi, psi]} for j in range(2)],
            "interpolation": {"family": "gaussian", "centers": list(S1_RHO_CENTERS),
                              "widths": [S1_RHO_WIDTH] * 2},
        },
        "scheduling": {"components": [{"family": "sinusoid", "amplitude": 1.0,
                                       "frequency": S1_OMEGA, "phase": 0.0}]},
        "controller": {"mode": "regulation", "k": list(S1_K)},
        "approximators": [
            {"inputs": ["x1"], "grid": {"lower": [-1.0], "upper": [1.0], "counts": [3],
                                        "width": S1_W1},
             "gamma": S1_GAMMA, "sigma": S1_SIGMA, "theta0": {"policy": "zeros"}},
            {"inputs": ["x1", "x2"], "grid": {"lower": [-1.0, -1.0], "upper": [1.0, 1.0],
                                              "counts": [3, 3], "width": S1_W2},
             "gamma": S1_GAMMA, "sigma": S1_SIGMA, "theta0": {"policy": "zeros"}},
        ],
        "bounds": {"psi_lower": [S1_PSI, S1_PSI], "psi_upper": [S1_PSI, S1_PSI],
                   "psi_rate": [0.0, 0.0], "d_alpha": [0.0, d2], "c": list(S1_C)},
        "oracle": {"theta_star": [[t.tolist() for t in row] for row in s1_theta_star()]},
        "integration": {"h": 1e-3, "T": T, "decimation": 10},
        "boxes": {"x": [[-3.0, 3.0], [-5.0, 5.0]], "nu": [[-1.5, 1.5]]},
        "initial": {"x": list(x0)},
        "seed": 0,
    }


# -- S2: tracking with trajectory initialization -----------------------------

S2_GRID1 = {"lower": [-2.0, -1.0, -3.0], "upper": [2.0, 1.0, 3.0], "counts": [3, 2, 5],
            "width": 1.5}


def s2_dict(theta0_stage1="ramp") -> dict:
    centers = grid_centers(S2_GRID1["lower"], S2_GRID1["upper"], S2_GRID1["counts"])
    if theta0_stage1 == "ramp":
        ramp = (0.8 * centers[:, 2]).tolist()
        th0 = {"policy": "explicit", "values": [ramp, ramp]}
    else:
        th0 = {"policy": "zeros"}
    return {
        "name": "S2 tracking with trajectory initialization",
        "plant": {
            "n": 2,
            "pieces": [
                {"phi": ["-x1 + 0.2*sin(x1)", "0.5*x1*x2 - x2"], "psi": ["1.5", "1 + 0.2*cos(x1)"]},
                {"phi": ["-0.5*x1", "-x2 + 0.3*sin(x1)"], "psi": ["2", "1.5"]},
            ],
            "interpolation": {"family": "gaussian", "centers": [-1.0, 1.0], "widths": [1.0, 1.0]},
        },
        "scheduling": {"components": [{"family": "sinusoid", "amplitude": 1.0,
                                       "frequency": 0.4, "phase": 0.3}]},
        "controller": {"mode": "tracking", "k": [1.5, 1.5],
                       "reference": {"f_r": "-xr1 - 2*xr2 + r",
                                     "r": {"family": "sinusoid", "amplitude": 0.5,
                                           "frequency": 0.5, "phase": 0.0},
                                     "init": "trajectory"}},
        "approximators": [
            {"inputs": ["x1", "v1", "xr2"], "grid": S2_GRID1, "gamma": 5.0, "sigma": 0.2,
             "theta0": th0},
            {"inputs": ["x1", "x2", "v1"], "grid": {"lower": [-2.0, -2.0, -1.0],
                                                    "upper": [2.0, 2.0, 1.0],
                                                    "counts": [3, 3, 2], "width": 1.5},
             "gamma": 5.0, "sigma": 0.2, "theta0": {"policy": "zeros"}},
        ],
        "integration": {"h": 1e-3, "T": 10.0, "decimation": 10},
        "boxes": {"x": [[-4.0, 4.0], [-6.0, 6.0]], "xr": [[-3.0, 3.0], [-4.0, 4.0]]},
        "initial": {"x": [0.4, 0.2]},
        "seed": 0,
    }


# -- reduction: one model, unit gains -----------------------------------------

RED_K = (2.0, 2.0)
RED_GAMMA = 4.0
RED_SIGMA = 0.1
RED_W1 = 1.0
RED_W2 = 1.0
RED_X0 = (0.8, -0.5)


def red_f1(x1):
    return 0.5 * math.sin(x1)


def red_f2(x1, x2):
    return 0.3 * x1 * x2 - 0.2 * x2**3


def reduction_dict() -> dict:
    return {
        "name": "single-model reduction",
        "plant": {"n": 2, "pieces": [{"phi": ["0.5*sin(x1)", "0.3*x1*x2 - 0.2*x2^3"],
                                      "psi": ["1", "1"]}],
                  "interpolation": {"family": "constant", "values": [1.0]}},
        "scheduling": {"components": [{"family": "constant", "value": 0.0}]},
        "controller": {"mode": "regulation", "k": list(RED_K)},
        "approximators": [
            {"inputs": ["x1"], "grid": {"lower": [-2.0], "upper": [2.0], "counts": [5],
                                        "width": RED_W1},
             "gamma": RED_GAMMA, "sigma": RED_SIGMA},
            {"inputs": ["x1", "x2"], "grid": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0],
                                              "counts": [5, 5], "width": RED_W2},
             "gamma": RED_GAMMA, "sigma": RED_SIGMA},
        ],
        "integration": {"h": 1e-3, "T": 10.0, "decimation": 10},
        "boxes": {"x": [[-3.0, 3.0], [-5.0, 5.0]]},
        "initial": {"x": list(RED_X0)},
    }


# -- S3: tracking with a plant outside the basis span --------------------------


def s3_dict() -> dict:
    return {
        "name": "S3 non-representable tracking",
        "plant": {
            "n": 2,
            "pieces": [
                {"phi": ["0.5*sin(x1) + 0.3*x1", "0.2*x1*x2 - 0.2*x2 + 0.4*tanh(x1)"],
                 "psi": ["1 + 0.2*cos(x1)", "1.5"]},
                {"phi": ["-0.4*x1^3 + 0.2*x1", "0.3*sin(x2) + 0.2*x1"],
                 "psi": ["1.5", "1 + 0.3*tanh(x1)^2"]},
            ],
            "interpolation": {"family": "gaussian", "centers": [-1.0, 1.0], "widths": [1.0, 1.0]},
        },
        "scheduling": {"components": [{"family": "sum-of-sinusoids", "offset": 0.0,
                                       "terms": [{"amplitude": 0.8, "frequency": 0.7, "phase": 0.0},
                                                 {"amplitude": 0.3, "frequency": 1.9, "phase": 0.5}]}]},
        "controller": {"mode": "tracking", "k": [1.0, 1.0],
                       "reference": {"f_r": "-2*xr1 - 2*xr2 + 2*r",
                                     "r": {"family": "sinusoid", "amplitude": 0.5,
                                           "frequency": 0.6, "phase": 0.0},
                                     "init": "explicit"}},
        "approximators": [
            {"inputs": ["x1", "v1", "xr2"], "grid": {"lower": [-2.0, -1.0, -2.0],
                                                     "upper": [2.0, 1.0, 2.0],
                                                     "counts": [5, 3, 5], "width": 1.0},
             "gamma": 5.0, "sigma": 0.5},
            {"inputs": ["x1", "x2", "v1"], "grid": {"lower": [-2.0, -2.0, -1.0],
                                                    "upper": [2.0, 2.0, 1.0],
                                                    "counts": [5, 5, 3], "width": 1.0},
             "gamma": 5.0, "sigma": 0.5},
        ],
        "bounds": {"psi_lower": [0.8, 1.0], "psi_upper": [1.5, 1.5], "psi_rate": [0.5, 0.5],
                   "d_alpha": [0.3, 0.5], "theta_star_norms": [[2.0, 2.0], [3.0, 3.0]],
                   "c": [1.0, 1.0]},
        "integration": {"h": 1e-3, "T": 20.0, "decimation": 10},
        "boxes": {"x": [[-4.0, 4.0], [-6.0, 6.0]]},
        "initial": {"x": [0.3, 0.0], "xr": [0.3, 0.0]},
        "seed": 0,
    }


# -- bounds example: n=1 with hand-checkable constants ------------------------


def bounds_example_dict() -> dict:
    return {
        "name": "bound formula example",
        "plant": {"n": 1, "pieces": [{"phi": ["-x1"], "psi": ["1.5 + 0.5*tanh(x1)^2"]}]},
        "controller": {"mode": "regulation", "k": [1.0]},
        "approximators": [
            {"inputs": ["x1"], "grid": {"lower": [-1.0], "upper": [1.0], "counts": [3],
                                        "width": 1.0},
             "gamma": 8.0, "sigma": 0.8}],
        "bounds": {"psi_lower": [1.0], "psi_upper": [2.0], "psi_rate": [0.0],
                   "d_alpha": [0.2], "theta_star_norms": [[2.0]], "c": [1.0]},
        "integration": {"h": 1e-3, "T": 5.0, "decimation": 10},
        "initial": {"x": [0.0]},
    }


def main():
    os.makedirs(SCENARIO_DIR, exist_ok=True)
    d2 = float(S1_D2_MARGIN * measure_s1_delta2())
    docs = {
        "s1_representable.json": s1_dict(d2),
        "s0_equilibrium.json": s1_dict(d2, x0=(0.0, 0.0), T=5.0, name="S0 equilibrium"),
        "s2_tracking.json": s2_dict(),
        "s2_degenerate.json": {**s2_dict("zeros"), "name": "S2 with a flat stage-1 approximator"},
        "reduction.json": reduction_dict(),
        "s3_nonrepresentable.json": s3_dict(),
        "bounds_example.json": bounds_example_dict(),
    }
    for fname, doc in docs.items():
        with open(os.path.join(SCENARIO_DIR, fname), "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(f"d_alpha_2 = {d2!r}")


if __name__ == "__main__":
    main()
