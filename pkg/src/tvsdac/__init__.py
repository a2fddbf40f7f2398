"""Direct adaptive backstepping for strict-feedback plants with time-varying structure.

Modules: ``plant`` (interpolated plant models), ``exprlang`` (term expressions),
``approx`` (RBF approximators), ``controller`` (control and adaptation laws),
``analysis`` (bound formulas and trajectory checks), ``sim`` (RK4 closed-loop
simulation and sweeps), ``scenario`` (JSON documents) and ``cli``.
"""

from .analysis import (
    BoundSet,
    check_trajectory,
    compute_beta,
    compute_wd,
    lyapunov_value,
    residual_radius,
    v_envelope,
    z_transient_envelope,
)
from .kernel import BACKEND, available_backends
from .scenario import Scenario, load_scenario, scenario_from_dict
from .sim import TrajectoryLog, rk4_step, run_closed_loop, sweep

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BoundSet", "Scenario", "TrajectoryLog", "available_backends",
    "check_trajectory", "compute_beta", "compute_wd", "load_scenario", "lyapunov_value",
    "residual_radius", "rk4_step", "run_closed_loop", "scenario_from_dict", "sweep",
    "v_envelope", "z_transient_envelope",
]
