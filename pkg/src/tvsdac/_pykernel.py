"""Pure-Python closed-loop kernel: the fallback when the compiled core is absent.

It drives :func:`tvsdac.controller.closed_loop_rhs` directly, using the same
RK4 arithmetic as the compiled loop.
"""

import numpy as np

from .controller import closed_loop_rhs
from .errors import (
    ExprEvalError,
    InterpolationError,
    PlantEvaluationError,
    SingularGainError,
)

ST_OK, ST_NONFINITE, ST_SINGULAR, ST_BOX, ST_EXPR, ST_INTERP = range(6)


class ClosedLoopKernel:
    def __init__(self, system):
        self.system = system
        self.n = system.n
        self.dim = system.dim
        self.box = system.box
        self.error = None

    def _call(self, y, nu, r):
        try:
            return ST_OK, closed_loop_rhs(self.system, y, nu, r)
        except SingularGainError as exc:
            self.error = exc
            return ST_SINGULAR, None
        except InterpolationError as exc:
            self.error = exc
            return ST_INTERP, None
        except (ExprEvalError, PlantEvaluationError) as exc:
            self.error = exc
            return ST_EXPR, None

    def rhs(self, y, nu, r):
        st, dy = self._call(np.asarray(y, dtype=float), nu, r)
        return st, dy

    def integrate(self, y0, nu_table, r_table, h, nsteps, decim):
        y = np.array(y0, dtype=float)
        hh = 0.5 * h
        h6 = h / 6.0
        steps = [0]
        states = [y.copy()]
        box = self.box
        n = self.n
        for s in range(nsteps):
            st, k1 = self._call(y, nu_table[2 * s], r_table[2 * s])
            if st:
                return self._done(steps, states, st, s, -1)
            st, k2 = self._call(y + hh * k1, nu_table[2 * s + 1], r_table[2 * s + 1])
            if st:
                return self._done(steps, states, st, s, -1)
            st, k3 = self._call(y + hh * k2, nu_table[2 * s + 1], r_table[2 * s + 1])
            if st:
                return self._done(steps, states, st, s, -1)
            st, k4 = self._call(y + h * k3, nu_table[2 * s + 2], r_table[2 * s + 2])
            if st:
                return self._done(steps, states, st, s, -1)
            y = y + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = np.flatnonzero(~np.isfinite(y))
            if bad.size:
                return self._done(steps, states, ST_NONFINITE, s + 1, int(bad[0]))
            if box is not None:
                out = box.first_violation(y[:n])
                if out is not None:
                    return self._done(steps, states, ST_BOX, s + 1, out)
            if (s + 1) % decim == 0 or s + 1 == nsteps:
                steps.append(s + 1)
                states.append(y.copy())
        return self._done(steps, states, ST_OK, -1, -1)

    @staticmethod
    def _done(steps, states, status, fail_step, detail):
        return (np.asarray(steps, dtype=np.int64), np.asarray(states), status, fail_step, detail)
