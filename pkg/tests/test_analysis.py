import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scenario_path
from tvsdac.analysis import (
    BoundSet,
    Tolerances,
    check_trajectory,
    compute_beta,
    compute_wd,
    finite_difference,
    lyapunov_value,
    residual_radius,
    v_envelope,
    wd_terms,
    z_transient_envelope,
)
from tvsdac.errors import InvalidDesignError
from tvsdac.scenario import load_scenario
from tvsdac.sim import TrajectoryLog, run_closed_loop


def example_bounds(**over):
    kw = dict(psi_lower=[1.0], psi_upper=[2.0], psi_rate=[0.0], d_alpha=[0.2],
              theta_star_norms=[[2.0]], c=[1.0], sigma=[[0.1]], gamma=[[1.0]])
    kw.update(over)
    return BoundSet(**kw)


def test_wd_worked_example():
    assert abs(compute_wd(example_bounds(), [1.0]) - 0.21) <= 1e-15


def test_wd_zero_case():
    b = example_bounds(d_alpha=[0.0], theta_star_norms=[[0.0]])
    assert compute_wd(b, [1.0]) == 0.0


@pytest.mark.parametrize("c, psi_upper, sigma, expected", [
    (1.0, 2.0, 0.8, 0.8),     # cbar0=1, psi_m=0.5
    (2.0, 1.0, 10.0, 4.0),    # cbar0=2, psi_m=1
    (1.0, 2.0, 1.0, 1.0),     # tie
])
def test_beta_examples(c, psi_upper, sigma, expected):
    b = example_bounds(c=[c], psi_upper=[psi_upper], sigma=[[sigma]])
    assert compute_beta(b) == expected


def test_rate_bound_reduces_effective_c():
    b = example_bounds(c=[1.0], psi_rate=[1.0], psi_upper=[1.0], sigma=[[10.0]])
    assert b.c_bar0 == 0.5 and compute_beta(b) == 1.0
    with pytest.raises(InvalidDesignError):
        example_bounds(c=[0.5], psi_rate=[1.0])


def test_residual_examples():
    assert abs(residual_radius(1.0, 0.21, 0.8) - 0.525) <= 1e-15
    assert residual_radius(1.0, 0.0, 0.8) == 0.0
    assert residual_radius(0.5, 1.0, 1.0) == 1.0
    with pytest.raises(InvalidDesignError):
        residual_radius(1.0, 0.21, 0.0)


def test_psi_lower_m_uses_lower_bounds():
    b = BoundSet([0.5, 2.0], [1.0, 3.0], 0.0, 0.0, [[1.0], [1.0]], [1.0, 1.0])
    assert b.psi_lower_m == 0.5 and b.psi_upper_m == 3.0


def test_lyapunov_examples():
    assert lyapunov_value([1.0], [[np.zeros(2)]], [2.0], [[1.0]]) == 0.25
    assert lyapunov_value([0.0], [[np.zeros(2)]], [1.0], [[1.0]]) == 0.0
    v = lyapunov_value([1.0, 1.0], [[np.array([1.0])], [np.array([0.0])]], [1.0, 2.0],
                       [[2.0], [2.0]])
    assert v == 1.0


def test_v_envelope_examples():
    assert v_envelope(0.0, 3.0, 0.21, 0.8) == 3.0
    assert v_envelope(1e4, 3.0, 0.21, 0.8) == pytest.approx(0.2625, rel=1e-15)
    t = np.linspace(0, 10, 11)
    assert np.allclose(v_envelope(t, 0.2625, 0.21, 0.8), 0.2625, rtol=0, atol=1e-16)


def test_z_envelope_examples():
    b = example_bounds()
    got = z_transient_envelope(0.0, b, 0.21, 0.8, [[2.0]], [[1.0]])
    assert got == pytest.approx(4.525, rel=1e-15)
    assert z_transient_envelope(1e4, b, 0.21, 0.8, [[2.0]], [[1.0]]) == pytest.approx(0.525, rel=1e-15)
    t = np.linspace(0, 5, 6)
    flat = z_transient_envelope(t, b, 0.21, 0.8, [[0.0]], [[1.0]])
    assert np.all(flat == residual_radius(b, 0.21, 0.8))
    assert flat[0] == pytest.approx(0.525, rel=1e-15)


pos = st.floats(0.01, 10)


@settings(max_examples=100, deadline=None)
@given(pos, pos, pos, pos, pos, pos)
def test_wd_monotonicity(k, d, sigma, gamma, theta, factor):
    bigger = 1.0 + factor
    b = example_bounds(d_alpha=[d], theta_star_norms=[[theta]], sigma=[[sigma]], gamma=[[gamma]])
    w = compute_wd(b, [k])
    assert compute_wd(b, [k * bigger]) <= w
    assert compute_wd(example_bounds(d_alpha=[d * bigger], theta_star_norms=[[theta]],
                                     sigma=[[sigma]], gamma=[[gamma]]), [k]) >= w
    assert compute_wd(b, [k], sigma=[[sigma * bigger]], gamma=[[gamma]]) >= w
    assert compute_wd(b, [k], sigma=[[sigma]], gamma=[[gamma / bigger]]) >= w


@settings(max_examples=100, deadline=None)
@given(pos, pos, pos)
def test_residual_scaling(W, beta, s):
    r = residual_radius(1.0, W, beta)
    assert residual_radius(1.0, s * W, beta) == pytest.approx(s * r, rel=1e-14)
    assert residual_radius(1.0, W, s * beta) == pytest.approx(r / s, rel=1e-14)


def test_parameter_term_scales_with_sigma_over_gamma():
    b = example_bounds()
    _, p = wd_terms(b, [1.0])
    _, p10 = wd_terms(b, [1.0], sigma=[[0.01]], gamma=[[1.0]])
    assert p10 * 10 == pytest.approx(p, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(0, 5), st.floats(0.01, 3))
def test_v_envelope_monotone(V0, W, beta):
    t = np.linspace(0, 20, 200)
    env = v_envelope(t, V0, W, beta)
    d = np.diff(env)
    floor = W / beta
    tol = 1e-12 * max(1.0, V0, floor)
    if V0 >= floor:
        assert np.all(d <= tol)
    else:
        assert np.all(d >= -tol)


def test_finite_difference_is_exact_for_quadratics_inside():
    t = np.linspace(0, 1, 11)
    d = finite_difference(t, t**2)
    assert np.allclose(d[1:-1], 2 * t[1:-1], atol=1e-13)


def zero_log(rows=50):
    t = np.linspace(0, 5, rows)
    cols = ["t", "x1", "z1", "u", "sum_z2", "theta_norm_1_1", "V", "V_env", "z_env", "in_compact"]
    data = np.zeros((rows, len(cols)))
    data[:, 0] = t
    data[:, -1] = 1.0
    return TrajectoryLog(cols, data)


def test_equilibrium_log_passes_with_zero_margin():
    b = example_bounds(d_alpha=[0.0], theta_star_norms=[[0.0]])
    rep = check_trajectory(zero_log(), b, [1.0], Tolerances(rel=0.0))
    assert rep.passed
    assert rep.checks["z_envelope"][1] == 0.0 and rep.checks["v_envelope"][1] == 0.0


@pytest.fixture(scope="module")
def s1_log():
    sc = load_scenario(scenario_path("s1_representable.json"))
    return sc, run_closed_loop(sc)


def test_s1_log_passes(s1_log):
    sc, log = s1_log
    rep = check_trajectory(log, sc.bounds, sc.k)
    assert rep.passed, rep.summary()


def test_inflated_v_fails(s1_log):
    sc, log = s1_log
    bad = TrajectoryLog(list(log.columns), log.data.copy())
    j = bad.columns.index("V")
    bad.data[1:, j] *= 2.0  # V(0) untouched so the envelope stays put
    rep = check_trajectory(bad, sc.bounds, sc.k)
    assert not rep.checks["v_envelope"][0]


def test_z_only_check_without_oracle(s1_log):
    sc, log = s1_log
    keep = [c for c in log.columns if c not in ("V", "V_env", "z_env")]
    sub = TrajectoryLog(keep, np.column_stack([log.column(c) for c in keep]))
    rep = check_trajectory(sub, sc.bounds, sc.k)
    assert set(rep.checks) == {"z_envelope"} and rep.passed
