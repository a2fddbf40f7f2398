import copy

import numpy as np
import pytest
from hypothesis import given, settings

import build_scenarios as bs
from conftest import scenario_path
from test_exprlang import exprs
from tvsdac import exprlang, kernel
from tvsdac.errors import CompactSetExit, ExprDomainError, IntegrationError
from tvsdac.scenario import load_scenario, scenario_from_dict
from tvsdac.sim import initial_state, run_closed_loop

needs_cython = pytest.mark.skipif("cython" not in kernel.available_backends(),
                                  reason="compiled kernel not built")


def test_python_backend_always_available():
    assert "python" in kernel.available_backends()
    assert kernel.BACKEND in kernel.available_backends()


def test_unknown_backend_rejected():
    sc = load_scenario(scenario_path("reduction.json"))
    with pytest.raises(ValueError):
        kernel.make_kernel(sc.system, "fortran")


VARS = ["x1", "x2", "v1", "r"]


@needs_cython
@settings(max_examples=200, deadline=None)
@given(exprs)
def test_compiled_program_matches_tree_evaluation(e):
    from tvsdac import _ckernel

    env = {"x1": 0.7, "x2": -1.3, "v1": 0.25, "r": 2.0}
    prog = exprlang.compile_program(e, {name: i for i, name in enumerate(VARS)})
    vec = np.array([env[name] for name in VARS])
    try:
        want = exprlang.evaluate(e, env)
    except ExprDomainError:
        with pytest.raises(ValueError):
            _ckernel.eval_program(prog.code, prog.consts, vec)
        return
    got = _ckernel.eval_program(prog.code, prog.consts, vec)
    assert got == pytest.approx(want, rel=1e-13, abs=1e-13)


@pytest.mark.parametrize("name", ["s1_representable.json", "s2_tracking.json",
                                  "s3_nonrepresentable.json", "reduction.json"])
def test_backend_rhs_agrees(name, backend):
    sc = load_scenario(scenario_path(name))
    system = sc.system
    rng = np.random.default_rng(1)
    ref = kernel.make_kernel(system, "python")
    other = kernel.make_kernel(system, backend)
    for _ in range(5):
        y = initial_state(sc) + 0.1 * rng.normal(size=system.dim)
        t = rng.uniform(0, 5)
        nu = system.nu(t)
        r = system.r(t)
        s1, d1 = ref.rhs(y, nu, r)
        s2, d2 = other.rhs(y, nu, r)
        assert s1 == s2 == 0
        assert np.allclose(d1, d2, rtol=1e-12, atol=1e-13)


@needs_cython
@pytest.mark.parametrize("name", ["s1_representable.json", "s2_tracking.json",
                                  "s3_nonrepresentable.json"])
def test_backend_trajectories_agree(name):
    sc = load_scenario(scenario_path(name)).with_param("T", 0.5)
    a = run_closed_loop(sc, "python")
    b = run_closed_loop(sc, "cython")
    assert a.columns == b.columns
    assert np.max(np.abs(a.states - b.states)) <= 1e-12
    assert np.allclose(a.data, b.data, rtol=1e-11, atol=1e-12)


def reduction_variant(**changes):
    d = copy.deepcopy(bs.reduction_dict())
    d["integration"]["T"] = 1.0
    for path, value in changes.items():
        node = d
        keys = path.split(".")
        for k in keys[:-1]:
            node = node[int(k)] if k.isdigit() else node[k]
        node[keys[-1]] = value
    return scenario_from_dict(d)


def test_compact_set_exit(backend):
    sc = reduction_variant(**{"boxes.x": [[-3.0, 3.0], [-0.55, 0.55]]})
    with pytest.raises(CompactSetExit) as info:
        run_closed_loop(sc, backend)
    assert info.value.coordinate == "x2"
    assert not -0.55 <= info.value.value <= 0.55


def test_singular_gain_aborts(backend):
    d = copy.deepcopy(bs.reduction_dict())
    d["plant"]["pieces"] = [{"phi": ["0", "0"], "psi": ["1", "1"]},
                            {"phi": ["0", "0"], "psi": ["1", "-1"]}]
    d["plant"]["interpolation"] = {"family": "constant", "values": [0.5, 0.5]}
    for st in d["approximators"]:
        st["grids"] = [st.pop("grid")] * 2
    sc = scenario_from_dict(d)
    with pytest.raises(IntegrationError, match="psi2"):
        run_closed_loop(sc, backend)


def test_expression_domain_error_aborts(backend):
    sc = reduction_variant(**{"plant.pieces.0.phi": ["x1*sqrt(0.7 - x1)", "0"]})
    with pytest.raises(IntegrationError) as info:
        run_closed_loop(sc, backend)
    assert info.value.t == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_aborts_without_box(backend):
    d = copy.deepcopy(bs.reduction_dict())
    d["plant"]["pieces"][0]["phi"] = ["1e3*x1^3", "0"]
    d["boxes"] = {}
    d["integration"]["T"] = 1.0
    with pytest.raises(IntegrationError):
        run_closed_loop(scenario_from_dict(d), backend)


def _python(code, **env):
    import os
    import subprocess
    import sys

    full = dict(os.environ, **env)
    return subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                          env=full, check=False)


def test_environment_forces_fallback():
    proc = _python("from tvsdac import kernel; print(kernel.BACKEND)", TVSDAC_BACKEND="python")
    assert proc.stdout.strip() == "python"


def test_benchmark_runs():
    import os

    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    bench = os.path.join(root, "benchmarks", "bench_backends.py")
    proc = _python(f"import runpy, sys; sys.argv = ['b', '--T', '0.05', '--repeat', '1']; "
                   f"runpy.run_path({bench!r}, run_name='__main__')")
    assert proc.returncode == 0, proc.stderr
    assert "python" in proc.stdout
