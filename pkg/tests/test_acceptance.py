"""Acceptance criteria; each test prints one ``[PASS]``/``[FAIL]`` line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import criteria  # noqa: E402


def _line(number, title, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}"


def c1():
    steady, radius, rep = criteria.s1_residual()
    ok = steady <= radius and rep.checks["z_envelope"][0]
    return ok, (f"steady sum z^2={steady:.3e} <= residual={radius:.4g}; "
                f"z envelope margin={rep.checks['z_envelope'][1]:.3g}")


def c2():
    _, _, rep = criteria.s1_residual()
    ok = rep.checks["v_envelope"][0] and rep.checks["dv_inequality"][0]
    return ok, (f"V envelope margin={rep.checks['v_envelope'][1]:.3g}, "
                f"dV inequality margin={rep.checks['dv_inequality'][1]:.3g} (5% slack)")


def c3():
    z = criteria.s2_init_max_z()
    return z <= 1e-8, f"max|z_i(0)|={z:.3e} <= 1e-8"


def c4():
    diff, T = criteria.reduction_max_diff()
    return diff <= 1e-10 and T == 10.0, f"max state difference={diff:.3e} <= 1e-10 over T={T:g}"


def c5():
    steady, status = criteria.k_sweep()
    mono = all(b <= a * 1.01 for a, b in zip(steady, steady[1:]))
    ratio, before, after = criteria.sigma_gamma_reduction()
    ok = (all(s == "ok" for s in status) and mono and abs(ratio - 10.0) <= 1e-12
          and after <= before * 1.01)
    return ok, ("k=1,2,4,8 steady sum z^2=" + ", ".join(f"{s:.3e}" for s in steady)
                + f"; sigma/gamma /10: parameter term ratio={ratio:.15g}, "
                f"residual {before:.3e} -> {after:.3e}")


def c6():
    err = criteria.leakage_error()
    return err <= 1e-6, f"max | |theta(t)| - |theta(0)|e^(-sigma t) | = {err:.3e} <= 1e-6 for sigma t <= 5"


def c7():
    order, errs = criteria.rk4_order()
    return order >= 3.8, f"measured order={order:.3f} >= 3.8 (differences {', '.join(f'{e:.2e}' for e in errs)})"


def c8():
    worst, T = criteria.equilibrium_max()
    return worst <= 1e-14 and T == 5.0, f"max|state|={worst:.3e} <= 1e-14 over T={T:g}"


def c9():
    W, beta, radius = criteria.formula_values()
    errs = (abs(W - 0.21), abs(beta - 0.8), abs(radius - 0.525))
    ok = all(e <= 1e-15 for e in errs)
    return ok, f"W_d={W!r} beta_d={beta!r} residual={radius!r}; worst error={max(errs):.2e} <= 1e-15"


CRITERIA = [
    (1, "S1 residual set and transient envelope", c1),
    (2, "S1 Lyapunov envelope and dV inequality", c2),
    (3, "S2 trajectory initialization", c3),
    (4, "reduction to classical backstepping", c4),
    (5, "design-guideline monotonicity", c5),
    (6, "pure-leakage decay", c6),
    (7, "RK4 convergence order", c7),
    (8, "equilibrium fixed point", c8),
    (9, "bound formula values", c9),
]


@pytest.mark.parametrize("number, title, fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, title, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + _line(number, title, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for number, title, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(_line(number, title, ok, detail))
    sys.exit(1 if failed else 0)
